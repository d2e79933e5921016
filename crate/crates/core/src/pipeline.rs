//! Clip-level enhancement, frame I/O, configuration and benchmarking.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage, StageExt};
use crate::frame::Frame;
use crate::fusion::{fuse_sequence, FusionOptions, FusionReport};
use crate::lattice::io::load_wlut4d;
use crate::lattice::{fuse_basis_luts, quadrilinear_apply, FusionWeights, Lattice4D, MergeMode};
use crate::prior::{
    intensity_map, lighting_prior, load_predictor_params, predict_fusion_weights, PriorMap,
    PredictorParams,
};
use crate::wavelet::dwt2;

/// Default number of sampling points per lattice axis.
pub const DEFAULT_N: usize = 17;

/// An ordered run of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSequence {
    frames: Vec<Frame>,
    fps: f64,
    source: Option<PathBuf>,
}

impl ClipSequence {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        if let Some(first) = frames.first() {
            for (i, f) in frames.iter().enumerate() {
                if f.shape() != first.shape() {
                    return Err(Error::Format(format!(
                        "frame {i} is {:?}, frame 0 is {:?}",
                        f.shape(),
                        first.shape()
                    )));
                }
            }
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            frames,
            fps,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<PathBuf>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    #[default]
    Png,
    Ppm,
}

impl ImageKind {
    fn extension(self) -> &'static str {
        match self {
            ImageKind::Png => "png",
            ImageKind::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputFormat {
    pub kind: ImageKind,
    pub bit_depth: u8,
}

impl Default for OutputFormat {
    fn default() -> Self {
        Self {
            kind: ImageKind::Png,
            bit_depth: 8,
        }
    }
}

/// Enhancement settings as read from a JSON config file. Relative paths are
/// resolved against the file's directory by [`EnhanceConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceConfig {
    /// A single lattice used as is, bypassing weight prediction.
    pub lut: Option<PathBuf>,
    pub basis_luts: Vec<PathBuf>,
    pub predictor_params: Option<PathBuf>,
    pub n: usize,
    pub merge_mode: MergeMode,
    pub fusion: FusionOptions,
    pub threads: Option<usize>,
    pub output: OutputFormat,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            lut: None,
            basis_luts: Vec::new(),
            predictor_params: None,
            n: DEFAULT_N,
            merge_mode: MergeMode::Mean,
            fusion: FusionOptions::default(),
            threads: None,
            output: OutputFormat::default(),
        }
    }
}

impl EnhanceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.lut.as_mut() {
            resolve(p);
        }
        cfg.basis_luts.iter_mut().for_each(resolve);
        if let Some(p) = cfg.predictor_params.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be >= 2, got {}", self.n)));
        }
        if self.lut.is_some() && !self.basis_luts.is_empty() {
            return Err(Error::Config("set either lut or basis_luts, not both".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if !matches!(self.output.bit_depth, 8 | 16) {
            return Err(Error::Config(format!(
                "output bit depth must be 8 or 16, got {}",
                self.output.bit_depth
            )));
        }
        self.fusion.validate()
    }
}

/// Post-mapping refinement applied to every enhanced frame.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, frame: Frame) -> Result<Frame>;
}

/// Leaves frames untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl Denoiser for PassThrough {
    fn denoise(&self, frame: Frame) -> Result<Frame> {
        Ok(frame)
    }
}

/// Lattices and predictor loaded from an [`EnhanceConfig`].
pub struct Enhancer {
    bases: Vec<Lattice4D>,
    predictor: Option<PredictorParams>,
    merge_mode: MergeMode,
    fusion: FusionOptions,
    threads: Option<usize>,
    denoiser: Box<dyn Denoiser>,
}

impl std::fmt::Debug for Enhancer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Enhancer")
            .field("bases", &self.bases.len())
            .field("n", &self.n())
            .field("predictor", &self.predictor.is_some())
            .field("merge_mode", &self.merge_mode)
            .field("fusion", &self.fusion)
            .field("threads", &self.threads)
            .finish()
    }
}

impl Enhancer {
    /// Uses `bases` with an optional predictor. Without one, the bases are
    /// averaged with equal weights.
    pub fn new(
        bases: Vec<Lattice4D>,
        predictor: Option<PredictorParams>,
        merge_mode: MergeMode,
        fusion: FusionOptions,
    ) -> Result<Self> {
        let first = bases
            .first()
            .ok_or_else(|| Error::Config("at least one lattice is required".into()))?;
        for (i, b) in bases.iter().enumerate() {
            if b.n() != first.n() || b.axes() != first.axes() {
                return Err(Error::Config(format!(
                    "basis lattice {i} does not share size and axes with basis 0"
                )));
            }
        }
        if let Some(p) = &predictor {
            if p.bases() != bases.len() {
                return Err(Error::Config(format!(
                    "predictor produces {} weights for {} basis lattices",
                    p.bases(),
                    bases.len()
                )));
            }
        }
        fusion.validate()?;
        Ok(Self {
            bases,
            predictor,
            merge_mode,
            fusion,
            threads: None,
            denoiser: Box::new(PassThrough),
        })
    }

    /// A single identity lattice of size `n`.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(
            vec![Lattice4D::identity(n)?],
            None,
            MergeMode::Mean,
            FusionOptions::default(),
        )
    }

    pub fn from_config(cfg: &EnhanceConfig) -> Result<Self> {
        cfg.validate()?;
        let bases = if let Some(p) = &cfg.lut {
            vec![load_wlut4d(p)?]
        } else if cfg.basis_luts.is_empty() {
            vec![Lattice4D::identity(cfg.n)?]
        } else {
            cfg.basis_luts.iter().map(load_wlut4d).collect::<Result<_>>()?
        };
        if bases[0].n() != cfg.n {
            return Err(Error::Config(format!(
                "config sets n={} but the lattices have n={}",
                cfg.n,
                bases[0].n()
            )));
        }
        let predictor = match (&cfg.predictor_params, &cfg.lut) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "predictor_params applies to basis_luts, not to a single lut".into(),
                ))
            }
            (Some(p), None) => Some(load_predictor_params(p)?),
            (None, _) => None,
        };
        let mut e = Self::new(bases, predictor, cfg.merge_mode, cfg.fusion)?;
        e.threads = cfg.threads;
        Ok(e)
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_denoiser(mut self, denoiser: Box<dyn Denoiser>) -> Self {
        self.denoiser = denoiser;
        self
    }

    pub fn n(&self) -> usize {
        self.bases[0].n()
    }

    pub fn bases(&self) -> &[Lattice4D] {
        &self.bases
    }

    pub fn threads(&self) -> Option<usize> {
        self.threads
    }

    /// Runs `f` on a pool with the configured thread count, or on the
    /// global pool when unset.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        run_with_threads(self.threads, f)
    }

    fn weights_for(&self, frame: &Frame, ll: &Frame) -> Result<FusionWeights> {
        match &self.predictor {
            Some(p) => predict_fusion_weights(frame, ll, p, self.merge_mode),
            None => {
                let k = self.bases.len();
                FusionWeights::fixed(vec![1.0 / k as f32; k])
            }
        }
    }
}

pub(crate) fn run_with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {t}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Lookup priors and low bands for every frame of a clip.
pub struct ClipPriors {
    pub priors: Vec<PriorMap>,
    pub low_bands: Vec<Frame>,
    pub report: FusionReport,
}

/// Wavelet, intensity and fusion stages for a whole clip.
pub fn clip_priors(frames: &[Frame], fusion: &FusionOptions) -> Result<ClipPriors> {
    let per_frame: Vec<(Frame, PriorMap, PriorMap)> = frames
        .par_iter()
        .map(|f| {
            let ll = dwt2(f).stage(Stage::Wavelet)?.ll;
            let light = lighting_prior(&ll, f.height(), f.width()).stage(Stage::LightingPrior)?;
            let intensity = intensity_map(f).stage(Stage::IntensityMap)?;
            Ok((ll, intensity, light))
        })
        .collect::<Result<_>>()?;
    let mut low_bands = Vec::with_capacity(frames.len());
    let mut intensities = Vec::with_capacity(frames.len());
    let mut lightings = Vec::with_capacity(frames.len());
    for (ll, i, l) in per_frame {
        low_bands.push(ll);
        intensities.push(i);
        lightings.push(l);
    }
    let (priors, report) = fuse_sequence(&intensities, &lightings, fusion).stage(Stage::Fusion)?;
    Ok(ClipPriors {
        priors,
        low_bands,
        report,
    })
}

/// The fused lookup prior of a single frame.
pub fn frame_prior(frame: &Frame, fusion: &FusionOptions) -> Result<PriorMap> {
    let mut p = clip_priors(std::slice::from_ref(frame), fusion)?;
    Ok(p.priors.remove(0))
}

/// Enhances every frame of `clip`. Frame order is preserved and the output is
/// independent of the worker count.
pub fn enhance_clip(clip: &ClipSequence, enhancer: &Enhancer) -> Result<(ClipSequence, FusionReport)> {
    if clip.is_empty() {
        return Err(Error::InvalidArgument("cannot enhance an empty clip".into()));
    }
    for f in clip.frames() {
        if f.channels() != 3 {
            return Err(Error::InvalidArgument(format!(
                "frames must have 3 channels, got {}",
                f.channels()
            )));
        }
    }
    enhancer.install(|| {
        let priors = clip_priors(clip.frames(), &enhancer.fusion)?;
        let out: Vec<Frame> = clip
            .frames()
            .par_iter()
            .zip(&priors.low_bands)
            .zip(&priors.priors)
            .map(|((frame, ll), prior)| {
                let lut = if enhancer.bases.len() == 1 && enhancer.predictor.is_none() {
                    None
                } else {
                    let w = enhancer.weights_for(frame, ll).stage(Stage::WeightPrediction)?;
                    Some(fuse_basis_luts(&enhancer.bases, &w).stage(Stage::BasisFusion)?)
                };
                let lut = lut.as_ref().unwrap_or(&enhancer.bases[0]);
                let (mut mapped, _) =
                    quadrilinear_apply(lut, frame, prior).stage(Stage::Interpolation)?;
                mapped.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                enhancer.denoiser.denoise(mapped).stage(Stage::Denoise)
            })
            .collect::<Result<_>>()?;
        let mut seq = ClipSequence::new(out, clip.fps())?;
        seq.source = clip.source.clone();
        Ok((seq, priors.report))
    })?
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "ppm" | "pnm")
    )
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads one 8- or 16-bit PNG/PPM image as RGB in `[0, 1]`.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .into_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        _ => img
            .into_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect(),
    };
    Frame::new(h, w, 3, data)
}

/// Loads every PNG/PPM file of a directory in lexicographic order.
pub fn load_frames(dir: impl AsRef<Path>, fps: f64) -> Result<ClipSequence> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && is_frame_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptySequence(format!(
            "no PNG/PPM frames in {}",
            dir.display()
        )));
    }
    let frames: Vec<Frame> = paths.par_iter().map(load_frame).collect::<Result<_>>()?;
    Ok(ClipSequence::new(frames, fps)?.with_source(dir))
}

/// Quantises `[0, 1]` to `0..=max`, rounding half to even.
#[inline]
pub fn quantize(v: f32, max: u32) -> u32 {
    let scaled = (v.clamp(0.0, 1.0) as f64 * max as f64).round_ties_even();
    scaled as u32
}

/// Writes one frame; the format follows the file extension.
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>, bit_depth: u8) -> Result<()> {
    let path = path.as_ref();
    frame.ensure_rgb()?;
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let format = ImageFormat::from_path(path).map_err(|e| image_error(path, e))?;
    let img = match bit_depth {
        8 => {
            let raw = frame.data().iter().map(|&v| quantize(v, 255) as u8).collect();
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).unwrap())
        }
        16 => {
            let raw = frame.data().iter().map(|&v| quantize(v, 65535) as u16).collect();
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).unwrap())
        }
        other => {
            return Err(Error::InvalidArgument(format!("bit depth must be 8 or 16, got {other}")))
        }
    };
    img.save_with_format(path, format).map_err(|e| image_error(path, e))
}

/// Writes `frame_000000.<ext>` and onwards into `dir`, creating it if needed.
pub fn save_frames(clip: &ClipSequence, dir: impl AsRef<Path>, format: OutputFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = (0..clip.len())
        .map(|i| dir.join(format!("frame_{i:06}.{}", format.kind.extension())))
        .collect();
    clip.frames()
        .par_iter()
        .zip(&paths)
        .try_for_each(|(f, p)| save_frame(f, p, format.bit_depth))?;
    Ok(paths)
}

/// A deterministic random RGB clip.
pub fn random_clip(width: usize, height: usize, frames: usize, seed: u64) -> Result<ClipSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..frames)
        .map(|_| Frame::from_fn(height, width, 3, |_, _, _| rng.random()))
        .collect::<Result<_>>()?;
    ClipSequence::new(frames, 30.0)
}

/// Timing of one benchmark configuration (medians over the repeats).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub threads: usize,
    pub repeats: usize,
    pub n: usize,
    pub pipeline_ms_per_frame: f64,
    pub pipeline_fps: f64,
    pub quadrilinear_ms_per_frame: f64,
    pub quadrilinear_fps: f64,
    pub hardware: String,
}

pub const BENCH_REPEATS: usize = 5;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// CPU model and logical core count of the host.
pub fn hardware_description() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let model = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{model}, {cores} logical cores, {}", std::env::consts::OS)
}

/// Times the full pipeline and the interpolation stage alone on a seeded
/// random clip.
pub fn benchmark(
    enhancer: &Enhancer,
    width: usize,
    height: usize,
    frames: usize,
    threads: usize,
    seed: u64,
) -> Result<BenchReport> {
    if frames == 0 || threads == 0 {
        return Err(Error::InvalidArgument("frames and threads must be >= 1".into()));
    }
    let clip = random_clip(width, height, frames, seed)?;
    let priors: Vec<PriorMap> = clip_priors(clip.frames(), &enhancer.fusion)?.priors;
    let lut = &enhancer.bases[0];
    run_with_threads(Some(threads), || -> Result<BenchReport> {
        let mut full = Vec::with_capacity(BENCH_REPEATS);
        let mut quad = Vec::with_capacity(BENCH_REPEATS);
        for _ in 0..BENCH_REPEATS {
            let t = Instant::now();
            enhance_clip(&clip, enhancer)?;
            full.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            for (f, p) in clip.frames().iter().zip(&priors) {
                quadrilinear_apply(lut, f, p)?;
            }
            quad.push(t.elapsed().as_secs_f64());
        }
        let per_frame = |s: f64| s * 1000.0 / frames as f64;
        let full_ms = per_frame(median(full));
        let quad_ms = per_frame(median(quad));
        Ok(BenchReport {
            width,
            height,
            frames,
            threads,
            repeats: BENCH_REPEATS,
            n: enhancer.n(),
            pipeline_ms_per_frame: full_ms,
            pipeline_fps: 1000.0 / full_ms,
            quadrilinear_ms_per_frame: quad_ms,
            quadrilinear_fps: 1000.0 / quad_ms,
            hardware: hardware_description(),
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::io::save_wlut4d;

    #[test]
    fn empty_clip_is_rejected() {
        let clip = ClipSequence::new(vec![], 30.0).unwrap();
        let e = Enhancer::identity(3).unwrap();
        assert!(matches!(enhance_clip(&clip, &e), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let a = Frame::filled(4, 4, 3, 0.0).unwrap();
        let b = Frame::filled(4, 5, 3, 0.0).unwrap();
        assert!(matches!(ClipSequence::new(vec![a, b], 30.0), Err(Error::Format(_))));
    }

    #[test]
    fn identity_pipeline() {
        let clip = random_clip(17, 9, 3, 4).unwrap();
        let e = Enhancer::identity(5).unwrap();
        let (out, report) = enhance_clip(&clip, &e).unwrap();
        assert_eq!(report.per_frame_weight.len(), 3);
        for (a, b) in out.frames().iter().zip(clip.frames()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn quantize_rounds_half_to_even() {
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(0.0, 255), 0);
        assert_eq!(quantize(1.0, 65535), 65535);
        assert_eq!(quantize(0.5, 1), 0);
        assert_eq!(quantize(0.5, 3), 2);
        assert_eq!(quantize(0.25, 2), 0);
        assert_eq!(quantize(0.75, 2), 2);
        assert_eq!(quantize(-0.3, 255), 0);
    }

    #[test]
    fn config_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        save_wlut4d(&Lattice4D::identity(3).unwrap(), dir.path().join("id.wlut")).unwrap();
        let cfg_path = dir.path().join("cfg.json");
        fs::write(&cfg_path, r#"{"lut": "id.wlut", "n": 3, "threads": 2}"#).unwrap();
        let cfg = EnhanceConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.lut.as_deref(), Some(dir.path().join("id.wlut").as_path()));
        let e = Enhancer::from_config(&cfg).unwrap();
        assert_eq!(e.n(), 3);
        assert_eq!(e.threads(), Some(2));

        fs::write(&cfg_path, r#"{"lut": "id.wlut", "n": 5}"#).unwrap();
        let cfg = EnhanceConfig::load(&cfg_path).unwrap();
        assert!(matches!(Enhancer::from_config(&cfg), Err(Error::Config(_))));
        fs::write(&cfg_path, r#"{"lutt": "id.wlut"}"#).unwrap();
        assert!(matches!(EnhanceConfig::load(&cfg_path), Err(Error::Config(_))));
    }

    #[test]
    fn benchmark_small() {
        let e = Enhancer::identity(3).unwrap();
        let r = benchmark(&e, 64, 64, 2, 1, 0).unwrap();
        assert!(r.pipeline_fps.is_finite() && r.pipeline_fps > 0.0);
        assert!(r.quadrilinear_fps.is_finite() && r.quadrilinear_fps > 0.0);
        assert_eq!(r.repeats, 5);
    }
}
