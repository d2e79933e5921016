//! Full-reference quality metrics: PSNR and SSIM.
//!
//! SSIM follows the usual construction: an 11×11 Gaussian window with
//! σ = 1.5, evaluated only where the window fits inside the frame, with the
//! local index averaged over positions and channels.

use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub peak: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            peak: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn with_peak(peak: f64) -> Self {
        Self {
            peak,
            ..Self::default()
        }
    }

    /// The default window, shrunk to the largest odd size that fits an
    /// `h × w` frame. Used by the content loss on small crops.
    pub fn fitted_to(h: usize, w: usize) -> Self {
        let mut cfg = Self::default();
        let limit = h.min(w);
        if limit < cfg.window {
            cfg.window = if limit % 2 == 1 { limit } else { limit.saturating_sub(1).max(1) };
        }
        cfg
    }

    fn c1(&self) -> f64 {
        (0.01 * self.peak).powi(2)
    }

    fn c2(&self) -> f64 {
        (0.03 * self.peak).powi(2)
    }
}

/// Normalised 1D Gaussian taps.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - mid).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable correlation keeping only fully-covered positions.
fn filter_valid(p: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        let dst = &mut tmp[y * ow..(y + 1) * ow];
        for (i, &gi) in g.iter().enumerate() {
            for (d, s) in dst.iter_mut().zip(&row[i..i + ow]) {
                *d += gi * s;
            }
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, &gi) in g.iter().enumerate() {
            let src = &tmp[(y + i) * ow..(y + i + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += gi * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `oh × ow` map back to `h × w`.
fn filter_valid_adjoint(m: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..oh {
        for (i, &gi) in g.iter().enumerate() {
            let dst = &mut tmp[(y + i) * ow..(y + i + 1) * ow];
            for (d, s) in dst.iter_mut().zip(&m[y * ow..(y + 1) * ow]) {
                *d += gi * s;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        let src = &tmp[y * ow..(y + 1) * ow];
        for (j, &gj) in g.iter().enumerate() {
            for (d, s) in row[j..j + ow].iter_mut().zip(src) {
                *d += gj * s;
            }
        }
    }
    out
}

struct PlaneStats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn plane_stats(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64]) -> PlaneStats {
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, g);
    let mu_b = filter_valid(b, h, w, g);
    let e_aa = filter_valid(&sq(a, a), h, w, g);
    let e_bb = filter_valid(&sq(b, b), h, w, g);
    let e_ab = filter_valid(&sq(a, b), h, w, g);
    let var_a = e_aa.iter().zip(&mu_a).map(|(e, m)| e - m * m).collect();
    let var_b = e_bb.iter().zip(&mu_b).map(|(e, m)| e - m * m).collect();
    let cov = e_ab
        .iter()
        .zip(mu_a.iter().zip(&mu_b))
        .map(|(e, (ma, mb))| e - ma * mb)
        .collect();
    PlaneStats {
        mu_a,
        mu_b,
        var_a,
        var_b,
        cov,
    }
}

fn check_ssim_input(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<()> {
    a.ensure_same_shape(b)?;
    check_window(a.height(), a.width(), cfg)
}

fn check_window(h: usize, w: usize, cfg: &SsimConfig) -> Result<()> {
    if cfg.window == 0 || cfg.window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "SSIM window must be odd, got {}",
            cfg.window
        )));
    }
    if h < cfg.window || w < cfg.window {
        return Err(Error::InvalidArgument(format!(
            "frame {h}x{w} is smaller than the {}x{} SSIM window",
            cfg.window,
            cfg.window
        )));
    }
    if !(cfg.peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be positive, got {}", cfg.peak)));
    }
    Ok(())
}

fn planes_f64(f: &Frame) -> Vec<Vec<f64>> {
    (0..f.channels())
        .map(|c| f.plane(c).into_iter().map(f64::from).collect())
        .collect()
}

/// Mean SSIM with the default 11×11, σ = 1.5 window and peak 1.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    ssim_with(a, b, &SsimConfig::default())
}

pub fn ssim_with(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<f64> {
    check_ssim_input(a, b, cfg)?;
    let (h, w, ch) = a.shape();
    let g = gaussian_kernel(cfg.window, cfg.sigma);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let (pa, pb) = (planes_f64(a), planes_f64(b));
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let s = plane_stats(&pa[c], &pb[c], h, w, &g);
        for i in 0..s.mu_a.len() {
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            total += (2.0 * ma * mb + c1) * (2.0 * s.cov[i] + c2)
                / ((ma * ma + mb * mb + c1) * (s.var_a[i] + s.var_b[i] + c2));
        }
        count += s.mu_a.len();
    }
    Ok(total / count as f64)
}

/// Mean SSIM and its gradient with respect to every value of `a`
/// (interleaved like the frame data).
pub fn ssim_with_gradient(a: &Frame, b: &Frame, cfg: &SsimConfig) -> Result<(f64, Vec<f64>)> {
    check_ssim_input(a, b, cfg)?;
    Ok(ssim_gradient_planes(&planes_f64(a), &planes_f64(b), a.height(), a.width(), cfg))
}

/// [`ssim_with_gradient`] on interleaved double-precision values of shape
/// `(h, w, ch)`.
pub fn ssim_gradient_values(
    a: &[f64],
    b: &[f64],
    (h, w, ch): (usize, usize, usize),
    cfg: &SsimConfig,
) -> Result<(f64, Vec<f64>)> {
    if a.len() != h * w * ch || b.len() != a.len() {
        return Err(Error::Shape(format!(
            "expected {} values for {h}x{w}x{ch}, got {} and {}",
            h * w * ch,
            a.len(),
            b.len()
        )));
    }
    check_window(h, w, cfg)?;
    let split = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..ch).map(|c| v.iter().skip(c).step_by(ch).copied().collect()).collect()
    };
    Ok(ssim_gradient_planes(&split(a), &split(b), h, w, cfg))
}

fn ssim_gradient_planes(
    pa: &[Vec<f64>],
    pb: &[Vec<f64>],
    h: usize,
    w: usize,
    cfg: &SsimConfig,
) -> (f64, Vec<f64>) {
    let ch = pa.len();
    let g = gaussian_kernel(cfg.window, cfg.sigma);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let positions = (h + 1 - cfg.window) * (w + 1 - cfg.window);
    let scale = 1.0 / (positions * ch) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; h * w * ch];
    for c in 0..ch {
        let s = plane_stats(&pa[c], &pb[c], h, w, &g);
        // dS/dmu_a, dS/dvar_a, dS/dcov per window position
        let mut d_mu = vec![0.0; positions];
        let mut d_var = vec![0.0; positions];
        let mut d_cov = vec![0.0; positions];
        for i in 0..positions {
            let (ma, mb) = (s.mu_a[i], s.mu_b[i]);
            let a1 = 2.0 * ma * mb + c1;
            let a2 = 2.0 * s.cov[i] + c2;
            let b1 = ma * ma + mb * mb + c1;
            let b2 = s.var_a[i] + s.var_b[i] + c2;
            let v = a1 * a2 / (b1 * b2);
            total += v;
            d_mu[i] = scale * (2.0 * mb * a2 / (b1 * b2) - 2.0 * ma * v / b1);
            d_var[i] = scale * (-v / b2);
            d_cov[i] = scale * (2.0 * a1 / (b1 * b2));
        }
        // d var_a / d a_p = 2 g (a_p - mu_a); d cov / d a_p = g (b_p - mu_b)
        let lin: Vec<f64> = (0..positions)
            .map(|i| d_mu[i] - 2.0 * d_var[i] * s.mu_a[i] - d_cov[i] * s.mu_b[i])
            .collect();
        let t_lin = filter_valid_adjoint(&lin, h, w, &g);
        let t_var = filter_valid_adjoint(&d_var, h, w, &g);
        let t_cov = filter_valid_adjoint(&d_cov, h, w, &g);
        for p in 0..h * w {
            grad[p * ch + c] = t_lin[p] + 2.0 * pa[c][p] * t_var[p] + pb[c][p] * t_cov[p];
        }
    }
    (total * scale, grad)
}

/// Peak signal-to-noise ratio in dB; `+∞` for identical frames.
pub fn psnr(a: &Frame, b: &Frame, peak: f64) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be positive, got {peak}")));
    }
    let mse = mse(a, b);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn mse(a: &Frame, b: &Frame) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    sum / a.data().len() as f64
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameMetrics {
    #[serde(serialize_with = "ser_db")]
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-frame and mean scores for a pair of clips.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "ser_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub per_frame: Vec<FrameMetrics>,
}

impl MetricReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["frame_index", "psnr_db", "ssim"]).map_err(to_err)?;
        for (i, m) in self.per_frame.iter().enumerate() {
            w.write_record([i.to_string(), m.psnr.to_string(), m.ssim.to_string()])
                .map_err(to_err)?;
        }
        w.write_record(["mean".to_string(), self.psnr_db.to_string(), self.ssim.to_string()])
            .map_err(to_err)?;
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }
}

/// Scores `a` against reference `b`, frame by frame.
pub fn evaluate_clip(a: &[Frame], b: &[Frame], peak: f64) -> Result<MetricReport> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "clips have {} and {} frames",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptySequence("no frames to evaluate".into()));
    }
    let cfg = SsimConfig::with_peak(peak);
    let per_frame: Vec<FrameMetrics> = a
        .par_iter()
        .zip(b)
        .map(|(x, y)| {
            Ok(FrameMetrics {
                psnr: psnr(x, y, peak)?,
                ssim: ssim_with(x, y, &cfg)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = per_frame.len() as f64;
    Ok(MetricReport {
        psnr_db: per_frame.iter().map(|m| m.psnr).sum::<f64>() / n,
        ssim: per_frame.iter().map(|m| m.ssim).sum::<f64>() / n,
        per_frame,
    })
}
