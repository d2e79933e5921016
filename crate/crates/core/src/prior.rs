//! Intensity and lighting priors, and the basis-weight predictor.
//!
//! The intensity map is per-pixel luma of the input; the lighting prior is
//! luma of the wavelet low band, upsampled back to frame size. Basis weights
//! come from a pair of linear maps over pooled frame statistics: one applied
//! to the frame itself (giving `a`) and one to its low band (giving `b`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::lattice::{FusionWeights, MergeMode};

pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[inline]
pub fn luma(rgb: &[f32]) -> f32 {
    LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Intensity,
    Lighting,
    Fused,
}

/// A scalar field over the frame grid with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    kind: PriorKind,
}

impl PriorMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>, kind: PriorKind) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Shape(format!(
                "prior map {height}x{width} cannot hold {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "prior values must lie in [0, 1], found {v}"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
            kind,
        })
    }

    /// Clamps into `[0, 1]` (NaN becomes 0) and returns the map together with
    /// the number of values that had to be clamped.
    pub fn from_clamped(
        height: usize,
        width: usize,
        mut values: Vec<f32>,
        kind: PriorKind,
    ) -> Result<(Self, usize)> {
        let mut clamped = 0;
        for v in values.iter_mut() {
            if !(0.0..=1.0).contains(v) {
                *v = if *v > 1.0 { 1.0 } else { 0.0 };
                clamped += 1;
            }
        }
        Ok((Self::new(height, width, values, kind)?, clamped))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn ensure_same_shape(&self, other: &PriorMap) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape(format!(
                "prior maps differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Per-pixel luma.
pub fn intensity_map(frame: &Frame) -> Result<PriorMap> {
    intensity_map_with_gamma(frame, 1.0)
}

/// Per-pixel luma raised to `gamma`.
pub fn intensity_map_with_gamma(frame: &Frame, gamma: f32) -> Result<PriorMap> {
    frame.ensure_rgb()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let values: Vec<f32> = frame
        .data()
        .chunks_exact(3)
        .map(|p| {
            let y = luma(p).clamp(0.0, 1.0);
            if gamma == 1.0 {
                y
            } else {
                y.powf(gamma)
            }
        })
        .collect();
    PriorMap::new(frame.height(), frame.width(), values, PriorKind::Intensity)
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn upsample_bilinear(
    src: &[f32],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(out_h, in_h);
    let xs = taps(out_w, in_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let at = |y: usize, x: usize| src[y * in_w + x] as f64;
            let top = (1.0 - tx) * at(y0, x0) + tx * at(y0, x1);
            let bot = (1.0 - tx) * at(y1, x0) + tx * at(y1, x1);
            out.push(((1.0 - ty) * top + ty * bot) as f32);
        }
    }
    out
}

/// Luma of the low band, upsampled to `target_h × target_w`.
pub fn lighting_prior(ll: &Frame, target_h: usize, target_w: usize) -> Result<PriorMap> {
    ll.ensure_rgb()?;
    if target_h < ll.height() || target_w < ll.width() {
        return Err(Error::InvalidArgument(format!(
            "target {target_h}x{target_w} is smaller than the {}x{} low band",
            ll.height(),
            ll.width()
        )));
    }
    let l: Vec<f32> = ll.data().chunks_exact(3).map(luma).collect();
    let up = upsample_bilinear(&l, ll.height(), ll.width(), target_h, target_w);
    Ok(PriorMap::from_clamped(target_h, target_w, up, PriorKind::Lighting)?.0)
}

/// Pooling grid is `GRID × GRID` cells.
pub const GRID: usize = 4;
/// Statistics per cell: mean R, G, B; std R, G, B; min luma; max luma.
pub const STATS_PER_CELL: usize = 8;
/// Length of the pooled feature vector.
pub const FEATURE_LEN: usize = GRID * GRID * STATS_PER_CELL;

fn cell_bounds(i: usize, len: usize) -> (usize, usize) {
    let start = i * len / GRID;
    let end = ((i + 1) * len / GRID).max(start + 1).min(len);
    (start, end)
}

/// Pools an RGB frame into [`FEATURE_LEN`] statistics over a 4×4 grid,
/// cell-major (cell `(gy, gx)` occupies `[(gy·4 + gx)·8 .. +8]`).
pub fn pooled_features(frame: &Frame) -> Result<Vec<f64>> {
    frame.ensure_rgb()?;
    let mut out = Vec::with_capacity(FEATURE_LEN);
    for gy in 0..GRID {
        let (y0, y1) = cell_bounds(gy, frame.height());
        for gx in 0..GRID {
            let (x0, x1) = cell_bounds(gx, frame.width());
            let mut sum = [0f64; 3];
            let mut sq = [0f64; 3];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = frame.pixel(y, x);
                    for c in 0..3 {
                        let v = p[c] as f64;
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                    let l = luma(p) as f64;
                    lo = lo.min(l);
                    hi = hi.max(l);
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let mean = sum.map(|s| s / count);
            out.extend_from_slice(&mean);
            for c in 0..3 {
                out.push((sq[c] / count - mean[c] * mean[c]).max(0.0).sqrt());
            }
            out.push(lo);
            out.push(hi);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite pooled feature".into()));
    }
    Ok(out)
}

/// `y = W·x + b` with `W` stored row-major as `outputs × FEATURE_LEN`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    outputs: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl LinearMap {
    pub fn new(weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let outputs = bias.len();
        if outputs == 0 || weight.len() != outputs * FEATURE_LEN {
            return Err(Error::Shape(format!(
                "weight of length {} does not match {outputs}x{FEATURE_LEN}",
                weight.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite predictor parameter".into()));
        }
        Ok(Self {
            outputs,
            weight,
            bias,
        })
    }

    pub fn zeros_with_bias(bias: Vec<f32>) -> Result<Self> {
        Self::new(vec![0.0; bias.len() * FEATURE_LEN], bias)
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(FEATURE_LEN)
            .zip(&self.bias)
            .map(|(row, &b)| {
                row.iter()
                    .zip(features)
                    .map(|(&w, &x)| w as f64 * x)
                    .sum::<f64>()
                    + b as f64
            })
            .collect()
    }
}

/// Video-path and wavelet-path linear maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub video: LinearMap,
    pub wavelet: LinearMap,
}

impl PredictorParams {
    pub fn new(video: LinearMap, wavelet: LinearMap) -> Result<Self> {
        if video.outputs() != wavelet.outputs() {
            return Err(Error::Shape(format!(
                "video path predicts {} weights, wavelet path {}",
                video.outputs(),
                wavelet.outputs()
            )));
        }
        Ok(Self { video, wavelet })
    }

    /// Zero weights and a one-hot bias on the first basis for both paths, so
    /// the first basis lattice is selected regardless of content.
    pub fn select_first(bases: usize) -> Result<Self> {
        let mut bias = vec![0.0; bases];
        bias[0] = 1.0;
        Self::new(
            LinearMap::zeros_with_bias(bias.clone())?,
            LinearMap::zeros_with_bias(bias)?,
        )
    }

    pub fn bases(&self) -> usize {
        self.video.outputs()
    }
}

/// Predicts per-basis weights from a frame and its low band.
pub fn predict_fusion_weights(
    frame: &Frame,
    ll: &Frame,
    params: &PredictorParams,
    mode: MergeMode,
) -> Result<FusionWeights> {
    let a = params.video.apply(&pooled_features(frame)?);
    let b = params.wavelet.apply(&pooled_features(ll)?);
    if a.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("predicted fusion weight is not finite".into()));
    }
    FusionWeights::new(
        a.into_iter().map(|v| v as f32).collect(),
        b.into_iter().map(|v| v as f32).collect(),
        mode,
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    path: PathBuf,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamIndex {
    format: String,
    version: u32,
    feature_len: usize,
    tensors: Vec<TensorEntry>,
}

const PARAM_FORMAT: &str = "wavelut-predictor";

/// Writes `path` (JSON index) and a sibling `.bin` blob holding the
/// little-endian `f32` tensors the index points at.
pub fn save_predictor_params(params: &PredictorParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let blob_name = PathBuf::from(
        path.with_extension("bin")
            .file_name()
            .ok_or_else(|| Error::InvalidArgument(format!("bad params path {}", path.display())))?,
    );
    let k = params.bases();
    let tensors: [(&str, &[f32], Vec<usize>); 4] = [
        ("video.weight", params.video.weight(), vec![k, FEATURE_LEN]),
        ("video.bias", params.video.bias(), vec![k]),
        ("wavelet.weight", params.wavelet.weight(), vec![k, FEATURE_LEN]),
        ("wavelet.bias", params.wavelet.bias(), vec![k]),
    ];
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, data, shape) in tensors {
        entries.push(TensorEntry {
            name: name.into(),
            path: blob_name.clone(),
            shape,
            offset: blob.len() as u64,
        });
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let index = ParamIndex {
        format: PARAM_FORMAT.into(),
        version: 1,
        feature_len: FEATURE_LEN,
        tensors: entries,
    };
    let json = serde_json::to_string_pretty(&index).expect("serializable index");
    let blob_path = path.with_extension("bin");
    fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_predictor_params(path: impl AsRef<Path>) -> Result<PredictorParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: ParamIndex = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if index.format != PARAM_FORMAT || index.version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported parameter file {} v{}",
            path.display(),
            index.format,
            index.version
        )));
    }
    if index.feature_len != FEATURE_LEN {
        return Err(Error::Format(format!(
            "parameter file expects {} features, this build pools {FEATURE_LEN}",
            index.feature_len
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut blobs: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let mut tensor = |name: &str| -> Result<(Vec<usize>, Vec<f32>)> {
        let entry = index
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        let blob_path = base.join(&entry.path);
        if !blobs.iter().any(|(p, _)| *p == blob_path) {
            let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
            blobs.push((blob_path.clone(), bytes));
        }
        let bytes = &blobs.iter().find(|(p, _)| *p == blob_path).expect("loaded").1;
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let raw = bytes
            .get(start..start + count * 4)
            .ok_or_else(|| Error::Format(format!("tensor {name} runs past end of blob")))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok((entry.shape.clone(), data))
    };
    let mut map = |prefix: &str| -> Result<LinearMap> {
        let (ws, w) = tensor(&format!("{prefix}.weight"))?;
        let (bs, b) = tensor(&format!("{prefix}.bias"))?;
        if ws.len() != 2 || ws[1] != FEATURE_LEN || bs != [ws[0]] {
            return Err(Error::Format(format!("bad shapes for {prefix}: {ws:?}, {bs:?}")));
        }
        LinearMap::new(w, b).map_err(|e| Error::Format(e.to_string()))
    };
    let video = map("video")?;
    let wavelet = map("wavelet")?;
    PredictorParams::new(video, wavelet).map_err(|e| Error::Format(e.to_string()))
}
