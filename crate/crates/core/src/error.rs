use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::lattice::Lattice4D;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage tag attached to errors raised inside [`crate::pipeline::enhance_clip`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Wavelet,
    LightingPrior,
    IntensityMap,
    Fusion,
    WeightPrediction,
    BasisFusion,
    Interpolation,
    Denoise,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Wavelet => "wavelet",
            Stage::LightingPrior => "lighting-prior",
            Stage::IntensityMap => "intensity-map",
            Stage::Fusion => "dynamic-fusion",
            Stage::WeightPrediction => "weight-prediction",
            Stage::BasisFusion => "basis-fusion",
            Stage::Interpolation => "interpolation",
            Stage::Denoise => "denoise",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("empty frame sequence: {0}")]
    EmptySequence(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("optimisation diverged at step {step}; last finite loss {last_loss}")]
    Diverged {
        step: usize,
        last_loss: f64,
        /// Lattice values at the last step with a finite loss.
        last_state: Box<Lattice4D>,
    },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips any stage wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
