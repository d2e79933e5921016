//! Independent reference implementations used by the integration tests.
//! They favour directness over speed and share no code with the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelut::lattice::{CoordinateAxis, Lattice4D};
use wavelut::prior::{PriorKind, PriorMap};
use wavelut::Frame;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(h: usize, w: usize, rng: &mut impl Rng) -> Frame {
    Frame::from_fn(h, w, 3, |_, _, _| rng.random()).unwrap()
}

pub fn random_prior(h: usize, w: usize, rng: &mut impl Rng) -> PriorMap {
    PriorMap::new(h, w, (0..h * w).map(|_| rng.random()).collect(), PriorKind::Fused).unwrap()
}

pub fn random_lattice(n: usize, rng: &mut impl Rng) -> Lattice4D {
    let values = (0..n.pow(4) * 3).map(|_| rng.random()).collect();
    Lattice4D::new(Lattice4D::uniform_axes(n).unwrap(), values).unwrap()
}

/// Random strictly increasing axis from 0 to 1.
pub fn random_axis(n: usize, rng: &mut impl Rng) -> CoordinateAxis {
    let mut steps: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = steps.iter().sum();
    let mut acc = 0.0;
    let mut coords = vec![0.0f32];
    for s in steps.iter_mut().take(n - 2) {
        acc += *s / total;
        coords.push(acc as f32);
    }
    coords.push(1.0);
    CoordinateAxis::new(coords).unwrap()
}

/// Cell index and offset of `v` on `coords`, found by linear scan.
fn cell(coords: &[f32], v: f32) -> (usize, f64) {
    let v = v.clamp(coords[0], coords[coords.len() - 1]) as f64;
    let last = coords.len() - 2;
    let i = (0..=last)
        .find(|&i| v < coords[i + 1] as f64)
        .unwrap_or(last);
    let (lo, hi) = (coords[i] as f64, coords[i + 1] as f64);
    (i, (v - lo) / (hi - lo))
}

/// The 16-term quadrilinear sum written out literally.
pub fn quadrilinear_oracle(lut: &Lattice4D, rgb: [f32; 3], e: f32) -> [f64; 3] {
    let q = [rgb[0], rgb[1], rgb[2], e];
    let located: Vec<(usize, f64)> = (0..4).map(|d| cell(lut.axes()[d].coords(), q[d])).collect();
    let mut out = [0.0; 3];
    for bits in 0..16usize {
        let mut w = 1.0;
        let mut idx = [0usize; 4];
        for d in 0..4 {
            let (i, t) = located[d];
            if bits >> d & 1 == 1 {
                idx[d] = i + 1;
                w *= t;
            } else {
                idx[d] = i;
                w *= 1.0 - t;
            }
        }
        let v = lut.entry(idx[0], idx[1], idx[2], idx[3]);
        for c in 0..3 {
            out[c] += w * v[c] as f64;
        }
    }
    out
}

/// `Σ_k x_k e^{−2πi(u·y/H + v·x/W)}` evaluated term by term for one channel.
pub fn naive_dft(frame: &Frame, c: usize) -> Vec<(f64, f64)> {
    let (h, w) = (frame.height(), frame.width());
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let angle = -2.0 * std::f64::consts::PI
                        * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    let val = frame.get(y, x, c) as f64;
                    re += val * angle.cos();
                    im += val * angle.sin();
                }
            }
            // Self-conjugate bins are exactly real.
            if (2 * u) % h == 0 && (2 * v) % w == 0 {
                im = 0.0;
            }
            out.push((re, im));
        }
    }
    out
}

pub fn fourier_oracle(a: &Frame, b: &Frame, varpi: f64) -> f64 {
    let phase = |(re, im): (f64, f64)| if re.hypot(im) < 1e-12 { 0.0 } else { im.atan2(re) };
    let (mut amp, mut pha, mut count) = (0.0, 0.0, 0usize);
    for c in 0..a.channels() {
        for (p, q) in naive_dft(a, c).into_iter().zip(naive_dft(b, c)) {
            amp += (p.0.hypot(p.1) - q.0.hypot(q.1)).abs();
            pha += (phase(p) - phase(q)).abs();
            count += 1;
        }
    }
    (varpi * amp + (1.0 - varpi) * pha) / count as f64
}

/// Mean SSIM over every fully covered window position, each window's
/// statistics summed directly with 2D Gaussian weights.
pub fn ssim_oracle(a: &Frame, b: &Frame, window: usize, sigma: f64, peak: f64) -> f64 {
    let mid = (window as f64 - 1.0) / 2.0;
    let mut g = vec![vec![0.0; window]; window];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let r2 = (i as f64 - mid).powi(2) + (j as f64 - mid).powi(2);
            *v = (-r2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let (h, w) = (a.height(), a.width());
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        for y0 in 0..=h - window {
            for x0 in 0..=w - window {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..window {
                    for j in 0..window {
                        let wt = g[i][j] / total;
                        let p = a.get(y0 + i, x0 + j, c) as f64;
                        let q = b.get(y0 + i, x0 + j, c) as f64;
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Visits every forward neighbour pair `(p, q)` of grid points along all
/// four dimensions using explicit coordinates.
fn neighbour_pairs(lut: &Lattice4D, mut f: impl FnMut([f32; 3], [f32; 3])) {
    let n = lut.n();
    for s in 0..n {
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let here = lut.entry(x, y, z, s);
                    let idx = [x, y, z, s];
                    for d in 0..4 {
                        if idx[d] + 1 < n {
                            let mut nb = idx;
                            nb[d] += 1;
                            f(here, lut.entry(nb[0], nb[1], nb[2], nb[3]));
                        }
                    }
                }
            }
        }
    }
}

pub fn smooth_oracle(lut: &Lattice4D, merged: &[f32]) -> f64 {
    let mut s = 0.0;
    neighbour_pairs(lut, |p, q| {
        for c in 0..3 {
            s += (q[c] as f64 - p[c] as f64).powi(2);
        }
    });
    s + merged.iter().map(|&m| (m as f64).powi(2)).sum::<f64>()
}

pub fn monotone_oracle(lut: &Lattice4D) -> f64 {
    let mut s = 0.0;
    neighbour_pairs(lut, |p, q| {
        for c in 0..3 {
            s += (p[c] as f64 - q[c] as f64).max(0.0);
        }
    });
    s
}

/// `mean √(d² + ε²)` over all values.
pub fn charbonnier_oracle(a: &Frame, b: &Frame, eps: f64) -> f64 {
    let n = a.data().len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| ((p as f64 - q as f64).powi(2) + eps * eps).sqrt())
        .sum::<f64>()
        / n
}
