use rayon::prelude::*;

use super::axis::CoordinateAxis;
use super::ApplyStats;
use crate::error::{Error, Result};
use crate::frame::Frame;

/// Classic `n³` RGB lattice. Grid point `(x, y, z)` has number `(z·n + y)·n + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice3D {
    n: usize,
    axes: [CoordinateAxis; 3],
    values: Vec<f32>,
}

#[inline(always)]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    (1.0 - t) * a + t * b
}

impl Lattice3D {
    pub fn new(axes: [CoordinateAxis; 3], values: Vec<f32>) -> Result<Self> {
        let n = axes[0].len();
        if n < 2 {
            return Err(Error::InvalidSize(format!("lattice size must be >= 2, got {n}")));
        }
        if axes.iter().any(|a| a.len() != n) {
            return Err(Error::Shape(
                "all three axes must have the same number of sampling points".into(),
            ));
        }
        if values.len() != n.pow(3) * 3 {
            return Err(Error::Shape(format!(
                "a 3D lattice with n={n} needs {} values, got {}",
                n.pow(3) * 3,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite lattice value at {i}")));
        }
        Ok(Self { n, axes, values })
    }

    pub fn uniform(n: usize, values: Vec<f32>) -> Result<Self> {
        let a = CoordinateAxis::uniform(n)?;
        Self::new([a.clone(), a.clone(), a], values)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let a = CoordinateAxis::uniform(n)?;
        let c = a.coords();
        let mut values = Vec::with_capacity(n.pow(3) * 3);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    values.extend_from_slice(&[c[x], c[y], c[z]]);
                }
            }
        }
        Self::uniform(n, values)
    }

    pub fn constant(n: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::uniform(n, rgb.iter().copied().cycle().take(n.pow(3) * 3).collect())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> &[CoordinateAxis; 3] {
        &self.axes
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize, z: usize) -> [f32; 3] {
        let p = 3 * ((z * self.n + y) * self.n + x);
        [self.values[p], self.values[p + 1], self.values[p + 2]]
    }

    #[inline]
    pub fn sample(&self, rgb: [f32; 3]) -> [f32; 3] {
        self.sample_counted(rgb).0
    }

    #[inline]
    fn sample_counted(&self, rgb: [f32; 3]) -> ([f32; 3], u32) {
        let lr = self.axes[0].locate(rgb[0]);
        let lg = self.axes[1].locate(rgb[1]);
        let lb = self.axes[2].locate(rgb[2]);
        let clamped = lr.clamped as u32 + lg.clamped as u32 + lb.clamped as u32;
        let n = self.n;
        let (sx, sy, sz) = (3, 3 * n, 3 * n * n);
        let base = 3 * ((lb.index * n + lg.index) * n + lr.index);
        let v = &self.values[base..base + sz + sy + sx + 3];
        let mut out = [0.0f32; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let along_r = |off: usize| lerp(v[off + c], v[off + sx + c], lr.offset);
            let along_g = |off: usize| lerp(along_r(off), along_r(off + sy), lg.offset);
            *o = lerp(along_g(0), along_g(sz), lb.offset);
        }
        (out, clamped)
    }

    /// Lifts this table to four dimensions; the E coordinate is ignored.
    pub fn to_4d(&self) -> Result<super::Lattice4D> {
        let mut axes4 = Vec::with_capacity(4);
        axes4.extend(self.axes.iter().cloned());
        axes4.push(CoordinateAxis::uniform(self.n)?);
        let axes: [CoordinateAxis; 4] = axes4.try_into().expect("four axes");
        let mut values = Vec::with_capacity(self.values.len() * self.n);
        for _ in 0..self.n {
            values.extend_from_slice(&self.values);
        }
        super::Lattice4D::new(axes, values)
    }
}

/// Trilinear interpolation of an RGB frame. Out-of-range inputs are clamped
/// and counted in the returned statistics.
pub fn trilinear_apply(lut: &Lattice3D, frame: &Frame) -> Result<(Frame, ApplyStats)> {
    frame.ensure_rgb()?;
    let w = frame.width();
    let mut out = vec![0.0f32; frame.data().len()];
    let clamped: u64 = out
        .par_chunks_mut(w * 3)
        .zip(frame.data().par_chunks(w * 3))
        .map(|(dst, src)| {
            let mut clamped = 0u64;
            for (d, s) in dst.chunks_exact_mut(3).zip(src.chunks_exact(3)) {
                let (rgb, c) = lut.sample_counted([s[0], s[1], s[2]]);
                d.copy_from_slice(&rgb);
                clamped += c as u64;
            }
            clamped
        })
        .sum();
    Ok((
        Frame::new(frame.height(), w, 3, out)?,
        ApplyStats {
            pixels: (frame.height() * w) as u64,
            clamped_values: clamped,
        },
    ))
}
