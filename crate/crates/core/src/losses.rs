//! Training losses and the embedding-driven perceptual balance `ϖ`.
//!
//! Every loss is mean-reduced over values unless stated otherwise. Lattice
//! regularisers operate on flat value slices so the fitting loop can reuse
//! them on its double-precision parameters.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::lattice::{FusionWeights, Lattice4D};
use crate::metrics::{ssim_gradient_values, ssim_with, SsimConfig};

/// Phase is taken as zero for spectrum bins with a smaller modulus.
pub const PHASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Image,
    Text,
}

/// A named embedding read from an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    name: String,
    values: Vec<f32>,
    source: EmbeddingSource,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingHeader {
    name: String,
    length: usize,
    source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn new(name: impl Into<String>, values: Vec<f32>, source: EmbeddingSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSize("embedding has no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding contains a non-finite value".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Numeric("embedding has zero norm".into()));
        }
        Ok(Self {
            name: name.into(),
            values,
            source,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Serialises embeddings as consecutive records: a little-endian `u32` header
/// length, a JSON header `{name, length, source}`, then `length` f32 values.
pub fn write_embeddings(out: &mut impl Write, vectors: &[EmbeddingVector]) -> std::io::Result<()> {
    for v in vectors {
        let header = serde_json::to_vec(&EmbeddingHeader {
            name: v.name.clone(),
            length: v.values.len(),
            source: v.source,
        })
        .map_err(std::io::Error::other)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        for x in &v.values {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<EmbeddingVector>> {
    let mut rest = bytes;
    let mut out = Vec::new();
    let take = |rest: &mut &[u8], k: usize, what: &str| -> Result<Vec<u8>> {
        if rest.len() < k {
            return Err(Error::Format(format!("embedding file truncated in {what}")));
        }
        let (head, tail) = rest.split_at(k);
        *rest = tail;
        Ok(head.to_vec())
    };
    while !rest.is_empty() {
        let len = u32::from_le_bytes(take(&mut rest, 4, "header length")?.try_into().unwrap());
        let header: EmbeddingHeader = serde_json::from_slice(&take(&mut rest, len as usize, "header")?)
            .map_err(|e| Error::Format(format!("bad embedding header: {e}")))?;
        let payload = take(&mut rest, header.length * 4, "payload")?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(EmbeddingVector::new(header.name, values, header.source)?);
    }
    Ok(out)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingVector>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

pub fn save_embeddings(vectors: &[EmbeddingVector], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_embeddings(&mut buf, vectors).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Finds an embedding by name.
pub fn find_embedding<'a>(vectors: &'a [EmbeddingVector], name: &str) -> Result<&'a EmbeddingVector> {
    vectors
        .iter()
        .find(|v| v.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("no embedding named {name:?}")))
}

/// Cosine similarity of an image and a text embedding.
pub fn clip_similarity(img: &EmbeddingVector, txt: &EmbeddingVector) -> Result<f64> {
    if img.len() != txt.len() {
        return Err(Error::Shape(format!(
            "embedding lengths differ: {} vs {}",
            img.len(),
            txt.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in img.values.iter().zip(&txt.values) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("embedding has zero norm".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// `|sim_r1 − sim_h1| + |sim_r2 − sim_h2|`, before clamping. Lies in `[0, 4]`.
pub fn loss_parameter_raw(sim_r1: f64, sim_h1: f64, sim_r2: f64, sim_h2: f64) -> f64 {
    (sim_r1 - sim_h1).abs() + (sim_r2 - sim_h2).abs()
}

/// The perceptual balance `ϖ`: [`loss_parameter_raw`] clamped to `[0, 1]`.
pub fn loss_parameter(sim_r1: f64, sim_h1: f64, sim_r2: f64, sim_h2: f64) -> f64 {
    loss_parameter_raw(sim_r1, sim_h1, sim_r2, sim_h2).clamp(0.0, 1.0)
}

/// `ϖ` from the embeddings of the reference and the enhanced result against
/// the two prompts.
pub fn varpi_from_embeddings(
    reference: &EmbeddingVector,
    enhanced: &EmbeddingVector,
    prompt1: &EmbeddingVector,
    prompt2: &EmbeddingVector,
) -> Result<f64> {
    Ok(loss_parameter(
        clip_similarity(reference, prompt1)?,
        clip_similarity(enhanced, prompt1)?,
        clip_similarity(reference, prompt2)?,
        clip_similarity(enhanced, prompt2)?,
    ))
}

fn check_varpi(varpi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&varpi) {
        return Err(Error::InvalidArgument(format!("varpi must be in [0, 1], got {varpi}")));
    }
    Ok(())
}

/// Unnormalised 2D DFT of every channel, returned per channel in row-major
/// bin order.
pub fn spectrum(frame: &Frame) -> Vec<Vec<Complex64>> {
    Fft2::new(frame.height(), frame.width()).spectrum(&to_f64_data(frame), frame.channels())
}

fn to_f64_data(frame: &Frame) -> Vec<f64> {
    frame.data().iter().map(|&v| v as f64).collect()
}

/// Row and column plans for `h × w` transforms.
struct Fft2 {
    h: usize,
    w: usize,
    row: Arc<dyn rustfft::Fft<f64>>,
    col: Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        Self {
            h,
            w,
            row: planner.plan_fft_forward(w),
            col: planner.plan_fft_forward(h),
        }
    }

    /// Per-channel spectra of interleaved values.
    fn spectrum(&self, data: &[f64], ch: usize) -> Vec<Vec<Complex64>> {
        (0..ch)
            .map(|c| {
                let mut buf: Vec<Complex64> = data
                    .iter()
                    .skip(c)
                    .step_by(ch)
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                self.forward(&mut buf);
                self.snap_real_bins(&mut buf);
                buf
            })
            .collect()
    }

    /// Bins equal to their own conjugate are real for real input. Rounding
    /// leaves a signed residue in their imaginary part that would flip the
    /// phase of a negative bin between `π` and `−π`.
    fn snap_real_bins(&self, buf: &mut [Complex64]) {
        let rows = if self.h % 2 == 0 { vec![0, self.h / 2] } else { vec![0] };
        let cols = if self.w % 2 == 0 { vec![0, self.w / 2] } else { vec![0] };
        for &u in &rows {
            for &v in &cols {
                buf[u * self.w + v].im = 0.0;
            }
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        let (h, w) = (self.h, self.w);
        self.row.process(buf);
        let mut t = vec![Complex64::default(); h * w];
        transpose(buf, &mut t, h, w);
        self.col.process(&mut t);
        transpose(&t, buf, w, h);
    }
}

/// Writes the transpose of the `rows × cols` matrix `src` into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for (y, row) in src.chunks_exact(cols).enumerate() {
        for (x, &v) in row.iter().enumerate() {
            dst[x * rows + y] = v;
        }
    }
}

fn phase(z: Complex64) -> f64 {
    if z.norm() < PHASE_FLOOR {
        0.0
    } else {
        z.arg()
    }
}

/// `ϖ·mean|amp_h − amp_r| + (1 − ϖ)·mean|pha_h − pha_r|` over all bins and
/// channels.
pub fn fourier_perceptual_loss(vh: &Frame, vr: &Frame, varpi: f64) -> Result<f64> {
    vh.ensure_same_shape(vr)?;
    check_varpi(varpi)?;
    let (fh, fr) = (spectrum(vh), spectrum(vr));
    let mut amp = 0.0;
    let mut pha = 0.0;
    let mut count = 0usize;
    for (a, b) in fh.iter().zip(&fr) {
        for (&p, &q) in a.iter().zip(b) {
            amp += (p.norm() - q.norm()).abs();
            pha += (phase(p) - phase(q)).abs();
        }
        count += a.len();
    }
    Ok((varpi * amp + (1.0 - varpi) * pha) / count as f64)
}

/// Loss and gradient with respect to `vh`, interleaved like the frame data.
pub fn fourier_perceptual_gradient(vh: &Frame, vr: &Frame, varpi: f64) -> Result<(f64, Vec<f64>)> {
    vh.ensure_same_shape(vr)?;
    fourier_gradient_values(&to_f64_data(vh), &to_f64_data(vr), vh.shape(), varpi)
}

/// [`fourier_perceptual_gradient`] on interleaved double-precision values.
///
/// With `F = DFT(vh)` the gradient is `Re(DFT(H))`, where
/// `H_k = conj(F_k)·(α_k − iβ_k)`, `α_k = ϖ·sgn(ΔA_k)/(M|F_k|)` and
/// `β_k = (1−ϖ)·sgn(ΔP_k)/(M|F_k|²)`. Bins below the phase floor contribute
/// nothing.
pub fn fourier_gradient_values(
    vh: &[f64],
    vr: &[f64],
    shape: (usize, usize, usize),
    varpi: f64,
) -> Result<(f64, Vec<f64>)> {
    check_values(vh, vr, shape)?;
    check_varpi(varpi)?;
    let (h, w, ch) = shape;
    let m = (h * w * ch) as f64;
    let fft = Fft2::new(h, w);
    let (fh, fr) = (fft.spectrum(vh, ch), fft.spectrum(vr, ch));
    let mut total = 0.0;
    let mut grad = vec![0.0; h * w * ch];
    for c in 0..ch {
        let mut hk: Vec<Complex64> = fh[c]
            .iter()
            .zip(&fr[c])
            .map(|(&f, &r)| {
                let (da, dp) = (f.norm() - r.norm(), phase(f) - phase(r));
                total += varpi * da.abs() + (1.0 - varpi) * dp.abs();
                let mag = f.norm();
                if mag < PHASE_FLOOR {
                    return Complex64::default();
                }
                let alpha = varpi * sgn(da) / (m * mag);
                let beta = (1.0 - varpi) * sgn(dp) / (m * mag * mag);
                f.conj() * Complex64::new(alpha, -beta)
            })
            .collect();
        fft.forward(&mut hk);
        for (p, z) in hk.iter().enumerate() {
            grad[p * ch + c] = z.re;
        }
    }
    Ok((total / m, grad))
}

fn check_values(a: &[f64], b: &[f64], (h, w, ch): (usize, usize, usize)) -> Result<()> {
    let len = h * w * ch;
    if len == 0 || a.len() != len || b.len() != len {
        return Err(Error::Shape(format!(
            "expected {len} values for {h}x{w}x{ch}, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean of [`fourier_perceptual_loss`] over paired frames.
pub fn fourier_perceptual_loss_clip(vh: &[Frame], vr: &[Frame], varpi: f64) -> Result<f64> {
    mean_over_pairs(vh, vr, |a, b| fourier_perceptual_loss(a, b, varpi))
}

fn mean_over_pairs(
    vh: &[Frame],
    vr: &[Frame],
    f: impl Fn(&Frame, &Frame) -> Result<f64> + Sync,
) -> Result<f64> {
    if vh.len() != vr.len() {
        return Err(Error::Shape(format!(
            "clips have {} and {} frames",
            vh.len(),
            vr.len()
        )));
    }
    if vh.is_empty() {
        return Err(Error::EmptySequence("no frames to compare".into()));
    }
    let per: Vec<f64> = vh
        .par_iter()
        .zip(vr)
        .map(|(a, b)| f(a, b))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Constants of the content loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentParams {
    pub epsilon: f64,
    pub vartheta: f64,
}

impl Default for ContentParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            vartheta: 0.1,
        }
    }
}

/// Charbonnier plus weighted SSIM dissimilarity with default constants.
pub fn content_loss(vh: &Frame, vr: &Frame) -> Result<f64> {
    content_loss_with(vh, vr, &ContentParams::default())
}

/// `mean √((vh − vr)² + ε²) + ϑ(1 − SSIM(vh, vr))`.
///
/// Frames smaller than the 11×11 SSIM window use the largest odd window that
/// fits.
pub fn content_loss_with(vh: &Frame, vr: &Frame, p: &ContentParams) -> Result<f64> {
    vh.ensure_same_shape(vr)?;
    let charb = charbonnier(vh, vr, p.epsilon);
    let cfg = SsimConfig::fitted_to(vh.height(), vh.width());
    let s = ssim_with(vh, vr, &cfg)?;
    Ok(charb + p.vartheta * (1.0 - s))
}

/// Mean Charbonnier penalty.
pub fn charbonnier(vh: &Frame, vr: &Frame, epsilon: f64) -> f64 {
    let e2 = epsilon * epsilon;
    let sum: f64 = vh
        .data()
        .iter()
        .zip(vr.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            (d * d + e2).sqrt()
        })
        .sum();
    sum / vh.data().len() as f64
}

/// Content loss and its gradient with respect to `vh`.
pub fn content_gradient(vh: &Frame, vr: &Frame, p: &ContentParams) -> Result<(f64, Vec<f64>)> {
    vh.ensure_same_shape(vr)?;
    content_gradient_values(&to_f64_data(vh), &to_f64_data(vr), vh.shape(), p)
}

/// [`content_gradient`] on interleaved double-precision values.
pub fn content_gradient_values(
    vh: &[f64],
    vr: &[f64],
    shape: (usize, usize, usize),
    p: &ContentParams,
) -> Result<(f64, Vec<f64>)> {
    check_values(vh, vr, shape)?;
    let (value, mut grad) = charbonnier_gradient_values(vh, vr, p.epsilon);
    let mut value = value;
    if p.vartheta != 0.0 {
        let cfg = SsimConfig::fitted_to(shape.0, shape.1);
        let (s, ds) = ssim_gradient_values(vh, vr, shape, &cfg)?;
        value += p.vartheta * (1.0 - s);
        for (g, d) in grad.iter_mut().zip(ds) {
            *g -= p.vartheta * d;
        }
    }
    Ok((value, grad))
}

/// Mean Charbonnier penalty of double-precision values and its gradient.
pub fn charbonnier_gradient_values(vh: &[f64], vr: &[f64], epsilon: f64) -> (f64, Vec<f64>) {
    let m = vh.len() as f64;
    let e2 = epsilon * epsilon;
    let mut sum = 0.0;
    let grad = vh
        .iter()
        .zip(vr)
        .map(|(&a, &b)| {
            let d = a - b;
            let r = (d * d + e2).sqrt();
            sum += r;
            if r == 0.0 {
                0.0
            } else {
                d / (r * m)
            }
        })
        .collect();
    (sum / m, grad)
}

/// Mean of [`content_loss`] over paired frames.
pub fn content_loss_clip(vh: &[Frame], vr: &[Frame], p: &ContentParams) -> Result<f64> {
    mean_over_pairs(vh, vr, |a, b| content_loss_with(a, b, p))
}

/// Calls `f(i, j)` for every pair of lattice values `(i, j)` adjacent along
/// one of the four index dimensions (`j` one step further along it).
fn for_each_forward_pair(n: usize, mut f: impl FnMut(usize, usize)) {
    for d in 0..4u32 {
        // Value runs of `inner` points share their position along axis `d`.
        let inner = 3 * n.pow(d);
        let outer = n.pow(3 - d);
        for o in 0..outer {
            for a in 0..n - 1 {
                let start = (o * n + a) * inner;
                for i in start..start + inner {
                    f(i, i + inner);
                }
            }
        }
    }
}

fn lattice_side(len: usize) -> Result<usize> {
    let points = len / 3;
    let n = (points as f64).powf(0.25).round() as usize;
    if n < 2 || n.pow(4) * 3 != len {
        return Err(Error::Shape(format!("{len} values do not form an n⁴×3 lattice")));
    }
    Ok(n)
}

/// Sum of squared forward differences over the four index dimensions.
pub fn smooth_term(values: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for_each_forward_pair(n, |i, j| {
        let d = values[j] - values[i];
        s += d * d;
    });
    s
}

/// Adds the gradient of `scale · smooth_term` to `grad`.
pub fn smooth_term_gradient(values: &[f64], n: usize, scale: f64, grad: &mut [f64]) {
    for_each_forward_pair(n, |i, j| {
        let d = 2.0 * scale * (values[j] - values[i]);
        grad[j] += d;
        grad[i] -= d;
    });
}

/// Sum over the four dimensions and three channels of `max(0, C_i − C_{i+1})`.
pub fn monotone_term(values: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for_each_forward_pair(n, |i, j| s += (values[i] - values[j]).max(0.0));
    s
}

/// Adds the (sub)gradient of `scale · monotone_term` to `grad`.
pub fn monotone_term_gradient(values: &[f64], n: usize, scale: f64, grad: &mut [f64]) {
    for_each_forward_pair(n, |i, j| {
        if values[i] > values[j] {
            grad[i] += scale;
            grad[j] -= scale;
        }
    });
}

fn to_f64(lut: &Lattice4D) -> Vec<f64> {
    lut.values().iter().map(|&v| v as f64).collect()
}

/// Lattice smoothness plus `Σ merged²`.
pub fn smooth_loss(lut: &Lattice4D, w: &FusionWeights) -> f64 {
    let weights: f64 = w.merged.iter().map(|&v| (v as f64).powi(2)).sum();
    smooth_term(&to_f64(lut), lut.n()) + weights
}

/// Total monotonicity violation of a lattice.
pub fn monotone_loss(lut: &Lattice4D) -> f64 {
    monotone_term(&to_f64(lut), lut.n())
}

/// Monotonicity violation of raw values, inferring `n` from their count.
pub fn monotone_loss_values(values: &[f64]) -> Result<f64> {
    Ok(monotone_term(values, lattice_side(values.len())?))
}

/// Weighting constants of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub beta_s: f64,
    pub beta_m: f64,
    pub vartheta: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta_s: 1e-4,
            beta_m: 10.0,
            vartheta: 0.1,
            epsilon: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn content(&self) -> ContentParams {
        ContentParams {
            epsilon: self.epsilon,
            vartheta: self.vartheta,
        }
    }
}

/// Component values entering the total loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub content: f64,
    pub perceptual: f64,
    pub smooth: f64,
    pub monotone: f64,
}

/// All loss components, the weighted total and the constants used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub content: f64,
    pub perceptual: f64,
    pub smooth: f64,
    pub monotone: f64,
    pub total: f64,
    pub varpi: f64,
    pub weights: LossWeights,
}

/// `content + perceptual + β_s·smooth + β_m·monotone`.
pub fn total_loss(parts: LossParts, varpi: f64, weights: &LossWeights) -> Result<LossBundle> {
    let named = [
        ("content", parts.content),
        ("perceptual", parts.perceptual),
        ("smooth", parts.smooth),
        ("monotone", parts.monotone),
        ("varpi", varpi),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("{name} loss is not finite ({v})")));
        }
    }
    let total = parts.content
        + parts.perceptual
        + weights.beta_s * parts.smooth
        + weights.beta_m * parts.monotone;
    Ok(LossBundle {
        content: parts.content,
        perceptual: parts.perceptual,
        smooth: parts.smooth,
        monotone: parts.monotone,
        total,
        varpi,
        weights: *weights,
    })
}
