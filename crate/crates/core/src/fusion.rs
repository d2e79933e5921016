//! Similarity-weighted blending of the lighting prior with the intensity map.
//!
//! Each frame gets one scalar weight `w` derived from the Pearson-style
//! correlation of its two maps; the lookup prior is
//! `clamp(w·lighting + (1 − w)·intensity, 0, 1)`. A lighting prior that
//! disagrees with the frame's own structure is thereby pushed out in favour
//! of the intensity map.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::{PriorKind, PriorMap};

/// Maps a similarity in `[-1, 1]` to a blend weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum WeightMapping {
    /// `(s + 1) / 2`
    #[default]
    Linear,
    /// Two-way softmax over `(s, −s) / temperature`, i.e. `σ(2s / T)`.
    Softmax { temperature: f64 },
}

impl WeightMapping {
    pub fn weight(self, similarity: f64) -> f64 {
        let w = match self {
            WeightMapping::Linear => (similarity + 1.0) / 2.0,
            WeightMapping::Softmax { temperature } => {
                1.0 / (1.0 + (-2.0 * similarity / temperature).exp())
            }
        };
        w.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionOptions {
    pub mapping: WeightMapping,
    /// Exponential smoothing factor applied to the weight across frames:
    /// `w'_t = α·w'_{t−1} + (1 − α)·w_t`. Off when `None`.
    pub smoothing: Option<f64>,
}

impl FusionOptions {
    pub fn validate(&self) -> Result<()> {
        if let WeightMapping::Softmax { temperature } = self.mapping {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::Config(format!(
                    "softmax temperature must be positive, got {temperature}"
                )));
            }
        }
        if let Some(a) = self.smoothing {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::Config(format!("smoothing must be in [0, 1), got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FusionReport {
    pub per_frame_weight: Vec<f64>,
    pub per_frame_clamps: Vec<usize>,
    pub clamp_count: usize,
}

impl FusionReport {
    /// CSV with columns `frame_index, weight, clamp_count`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["frame_index", "weight", "clamp_count"]).map_err(to_err)?;
        for (i, (wt, c)) in self.per_frame_weight.iter().zip(&self.per_frame_clamps).enumerate() {
            w.write_record([i.to_string(), wt.to_string(), c.to_string()])
                .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Cosine similarity of the mean-centred value vectors. A constant map has
/// no structure to compare, so the result is 0 whenever either map is flat.
pub fn similarity(a: &PriorMap, b: &PriorMap) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let flat = |m: &PriorMap| {
        let first = m.values()[0];
        m.values().iter().all(|&v| v == first)
    };
    if flat(a) || flat(b) {
        return Ok(0.0);
    }
    let n = a.values().len() as f64;
    let mean = |m: &PriorMap| m.values().iter().map(|&v| v as f64).sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        dot += dx * dy;
        na += dx * dx;
        nb += dy * dy;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

fn check_kinds(intensity: &PriorMap, lighting: &PriorMap) -> Result<()> {
    if intensity.kind() != PriorKind::Intensity || lighting.kind() != PriorKind::Lighting {
        return Err(Error::InvalidArgument(format!(
            "expected (intensity, lighting) maps, got ({:?}, {:?})",
            intensity.kind(),
            lighting.kind()
        )));
    }
    intensity.ensure_same_shape(lighting)
}

/// Blends with a given weight; returns the fused map and its clamp count.
pub fn blend(intensity: &PriorMap, lighting: &PriorMap, w: f64) -> Result<(PriorMap, usize)> {
    intensity.ensure_same_shape(lighting)?;
    let values = intensity
        .values()
        .iter()
        .zip(lighting.values())
        .map(|(&i, &l)| (w * l as f64 + (1.0 - w) * i as f64) as f32)
        .collect();
    PriorMap::from_clamped(intensity.height(), intensity.width(), values, PriorKind::Fused)
}

/// Fuses one frame's maps with the linear similarity-to-weight mapping.
pub fn dynamic_fuse(intensity: &PriorMap, lighting: &PriorMap) -> Result<(PriorMap, f64)> {
    dynamic_fuse_with(intensity, lighting, WeightMapping::Linear)
}

pub fn dynamic_fuse_with(
    intensity: &PriorMap,
    lighting: &PriorMap,
    mapping: WeightMapping,
) -> Result<(PriorMap, f64)> {
    check_kinds(intensity, lighting)?;
    let w = mapping.weight(similarity(intensity, lighting)?);
    Ok((blend(intensity, lighting, w)?.0, w))
}

/// Fuses every frame of a clip. Frames are independent unless smoothing is
/// enabled, in which case only the scalar weights carry across frames.
pub fn fuse_sequence(
    intensities: &[PriorMap],
    lightings: &[PriorMap],
    options: &FusionOptions,
) -> Result<(Vec<PriorMap>, FusionReport)> {
    options.validate()?;
    if intensities.len() != lightings.len() {
        return Err(Error::InvalidArgument(format!(
            "{} intensity maps but {} lighting priors",
            intensities.len(),
            lightings.len()
        )));
    }
    let sims: Vec<f64> = intensities
        .par_iter()
        .zip(lightings)
        .map(|(i, l)| {
            check_kinds(i, l)?;
            similarity(i, l)
        })
        .collect::<Result<_>>()?;
    let weights = smooth_weights(&sims, options);
    let fused: Vec<(PriorMap, usize)> = intensities
        .par_iter()
        .zip(lightings)
        .zip(&weights)
        .map(|((i, l), &w)| blend(i, l, w))
        .collect::<Result<_>>()?;
    let per_frame_clamps: Vec<usize> = fused.iter().map(|(_, c)| *c).collect();
    let report = FusionReport {
        clamp_count: per_frame_clamps.iter().sum(),
        per_frame_clamps,
        per_frame_weight: weights,
    };
    Ok((fused.into_iter().map(|(m, _)| m).collect(), report))
}

/// Similarities to weights, with the optional exponential smoothing.
pub fn smooth_weights(similarities: &[f64], options: &FusionOptions) -> Vec<f64> {
    smooth_weights_from(similarities, options, None)
}

/// As [`smooth_weights`], continuing from the previous chunk's last weight.
pub fn smooth_weights_from(
    similarities: &[f64],
    options: &FusionOptions,
    previous: Option<f64>,
) -> Vec<f64> {
    let mut prev = previous;
    similarities
        .iter()
        .map(|&s| {
            let w = options.mapping.weight(s);
            let w = match (options.smoothing, prev) {
                (Some(a), Some(p)) => a * p + (1.0 - a) * w,
                _ => w,
            };
            prev = Some(w);
            w
        })
        .collect()
}
