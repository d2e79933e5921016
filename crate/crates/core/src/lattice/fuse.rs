use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Lattice4D;
use crate::error::{Error, Result};

/// How the video-path and wavelet-path weights are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// `(a + b) / 2`
    #[default]
    Mean,
    /// `a + b`
    Sum,
}

impl MergeMode {
    #[inline]
    pub fn merge(self, a: f32, b: f32) -> f32 {
        match self {
            MergeMode::Mean => 0.5 * (a + b),
            MergeMode::Sum => a + b,
        }
    }

    /// `d merged / d a` (equal to `d merged / d b`).
    #[inline]
    pub fn slope(self) -> f64 {
        match self {
            MergeMode::Mean => 0.5,
            MergeMode::Sum => 1.0,
        }
    }
}

/// Per-basis blend weights predicted from the video (`a`) and from its
/// wavelet low band (`b`), plus their merged combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub a: Vec<f32>,
    pub b: Vec<f32>,
    pub merged: Vec<f32>,
}

impl FusionWeights {
    pub fn new(a: Vec<f32>, b: Vec<f32>, mode: MergeMode) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "weight vectors differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite fusion weight".into()));
        }
        let merged = a.iter().zip(&b).map(|(&x, &y)| mode.merge(x, y)).collect();
        Ok(Self { a, b, merged })
    }

    /// Weights that select a fixed merged vector (both paths equal).
    pub fn fixed(merged: Vec<f32>) -> Result<Self> {
        Self::new(merged.clone(), merged, MergeMode::Mean)
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }
}

/// Soft-weighted sum of basis lattices: `Σ_k merged[k] · bases[k]`.
pub fn fuse_basis_luts(bases: &[Lattice4D], weights: &FusionWeights) -> Result<Lattice4D> {
    let first = bases
        .first()
        .ok_or_else(|| Error::InvalidArgument("no basis lattices given".into()))?;
    if weights.merged.len() != bases.len() {
        return Err(Error::InvalidArgument(format!(
            "{} merged weights for {} basis lattices",
            weights.merged.len(),
            bases.len()
        )));
    }
    for b in &bases[1..] {
        if b.n() != first.n() {
            return Err(Error::Shape(format!(
                "basis lattices differ in size: {} vs {}",
                first.n(),
                b.n()
            )));
        }
        if b.axes() != first.axes() {
            return Err(Error::Shape("basis lattices must share axes".into()));
        }
    }
    let mut out = vec![0.0f32; first.values().len()];
    const CHUNK: usize = 1 << 14;
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, dst)| {
        let start = ci * CHUNK;
        let mut acc = vec![0.0f64; dst.len()];
        for (k, basis) in bases.iter().enumerate() {
            let w = weights.merged[k] as f64;
            let src = &basis.values()[start..start + dst.len()];
            for (a, &s) in acc.iter_mut().zip(src) {
                *a += w * s as f64;
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    first.with_values(out)
}
