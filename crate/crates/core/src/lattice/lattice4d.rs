use rayon::prelude::*;

use super::axis::CoordinateAxis;
use super::ApplyStats;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::prior::PriorMap;

/// An `n⁴` lattice of RGB outputs indexed by `(R, G, B, E)`.
///
/// Grid point `(x, y, z, s)` has number `((s·n + z)·n + y)·n + x`, i.e. the R
/// index varies fastest; its RGB triple lives at `3·number .. 3·number + 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice4D {
    n: usize,
    axes: [CoordinateAxis; 4],
    values: Vec<f32>,
}

/// The 16 grid points surrounding a query with their blend weights.
///
/// Corner `k` steps `+1` along dimension `d` when bit `d` of `k` is set
/// (bit 0 = R, bit 1 = G, bit 2 = B, bit 3 = E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub points: [usize; 16],
    pub weights: [f64; 16],
    pub clamped: u32,
}

#[inline(always)]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // exact at t = 0 and t = 1
    (1.0 - t) * a + t * b
}

#[inline(always)]
fn lerp4(a: [f32; 4], b: [f32; 4], t: f32) -> [f32; 4] {
    std::array::from_fn(|k| lerp(a[k], b[k], t))
}

impl Lattice4D {
    pub fn new(axes: [CoordinateAxis; 4], values: Vec<f32>) -> Result<Self> {
        let n = axes[0].len();
        if n < 2 {
            return Err(Error::InvalidSize(format!("lattice size must be >= 2, got {n}")));
        }
        if axes.iter().any(|a| a.len() != n) {
            return Err(Error::Shape(
                "all four axes must have the same number of sampling points".into(),
            ));
        }
        let expected = n.pow(4) * 3;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "a 4D lattice with n={n} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite lattice value at {i}")));
        }
        Ok(Self { n, axes, values })
    }

    pub fn uniform_axes(n: usize) -> Result<[CoordinateAxis; 4]> {
        let a = CoordinateAxis::uniform(n)?;
        Ok([a.clone(), a.clone(), a.clone(), a])
    }

    /// Identity map on uniform axes: output RGB equals input RGB, E ignored.
    pub fn identity(n: usize) -> Result<Self> {
        Self::identity_on(Self::uniform_axes(n)?)
    }

    /// Identity map on the given axes.
    pub fn identity_on(axes: [CoordinateAxis; 4]) -> Result<Self> {
        let n = axes[0].len();
        let mut values = Vec::with_capacity(n.pow(4) * 3);
        for _s in 0..n {
            for z in 0..n {
                for y in 0..n {
                    for x in 0..n {
                        values.push(axes[0].coords()[x]);
                        values.push(axes[1].coords()[y]);
                        values.push(axes[2].coords()[z]);
                    }
                }
            }
        }
        Self::new(axes, values)
    }

    pub fn constant(n: usize, rgb: [f32; 3]) -> Result<Self> {
        let values = rgb.iter().copied().cycle().take(n.pow(4) * 3).collect();
        Self::new(Self::uniform_axes(n)?, values)
    }

    /// Builds a lattice by evaluating `f(r, g, b, e)` at every grid point.
    pub fn from_fn(
        axes: [CoordinateAxis; 4],
        mut f: impl FnMut(f32, f32, f32, f32) -> [f32; 3],
    ) -> Result<Self> {
        let n = axes[0].len();
        let mut values = Vec::with_capacity(n.pow(4) * 3);
        for s in 0..n {
            for z in 0..n {
                for y in 0..n {
                    for x in 0..n {
                        let rgb = f(
                            axes[0].coords()[x],
                            axes[1].coords()[y],
                            axes[2].coords()[z],
                            axes[3].coords()[s],
                        );
                        values.extend_from_slice(&rgb);
                    }
                }
            }
        }
        Self::new(axes, values)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn axes(&self) -> &[CoordinateAxis; 4] {
        &self.axes
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Same axes, new values.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(self.axes.clone(), values)
    }

    pub fn num_points(&self) -> usize {
        self.n.pow(4)
    }

    #[inline]
    pub fn point_number(&self, x: usize, y: usize, z: usize, s: usize) -> usize {
        ((s * self.n + z) * self.n + y) * self.n + x
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize, z: usize, s: usize) -> [f32; 3] {
        let p = 3 * self.point_number(x, y, z, s);
        [self.values[p], self.values[p + 1], self.values[p + 2]]
    }

    /// Interpolated RGB for one query.
    #[inline]
    pub fn sample(&self, rgb: [f32; 3], e: f32) -> [f32; 3] {
        self.sample_counted(rgb, e).0
    }

    #[inline]
    fn sample_counted(&self, rgb: [f32; 3], e: f32) -> ([f32; 3], u32) {
        let lr = self.axes[0].locate(rgb[0]);
        let lg = self.axes[1].locate(rgb[1]);
        let lb = self.axes[2].locate(rgb[2]);
        let le = self.axes[3].locate(e);
        let clamped = lr.clamped as u32 + lg.clamped as u32 + lb.clamped as u32 + le.clamped as u32;

        let n = self.n;
        let sx = 3;
        let sy = 3 * n;
        let sz = 3 * n * n;
        let ss = 3 * n * n * n;
        let base = 3 * (((le.index * n + lb.index) * n + lg.index) * n + lr.index);
        let (or, og, ob, oe) = (lr.offset, lg.offset, lb.offset, le.offset);
        let v = &self.values[base..base + ss + sz + sy + sx + 3];

        // All three channels are blended at once as lanes of a 4-wide
        // array; the per-channel operations match the scalar nesting.
        let rgb = |off: usize| [v[off], v[off + 1], v[off + 2], 0.0];
        let along_r = |off: usize| lerp4(rgb(off), rgb(off + sx), or);
        let along_g = |off: usize| lerp4(along_r(off), along_r(off + sy), og);
        let along_b = |off: usize| lerp4(along_g(off), along_g(off + sz), ob);
        let out = lerp4(along_b(0), along_b(ss), oe);
        ([out[0], out[1], out[2]], clamped)
    }

    /// The 16 neighbours of a query and their quadrilinear weights, computed
    /// in double precision. The weights always sum to one.
    pub fn corners(&self, rgb: [f32; 3], e: f32) -> Corners {
        let q = [rgb[0], rgb[1], rgb[2], e];
        let mut index = [0usize; 4];
        let mut offset = [0f64; 4];
        let mut clamped = 0u32;
        for d in 0..4 {
            let (i, o, c) = self.axes[d].locate_f64(q[d]);
            index[d] = i;
            offset[d] = o;
            clamped += c as u32;
        }
        let mut points = [0usize; 16];
        let mut weights = [0f64; 16];
        for k in 0..16 {
            let mut w = 1.0;
            let mut step = [0usize; 4];
            for d in 0..4 {
                if k >> d & 1 == 1 {
                    w *= offset[d];
                    step[d] = 1;
                } else {
                    w *= 1.0 - offset[d];
                }
            }
            points[k] = self.point_number(
                index[0] + step[0],
                index[1] + step[1],
                index[2] + step[2],
                index[3] + step[3],
            );
            weights[k] = w;
        }
        Corners {
            points,
            weights,
            clamped,
        }
    }

    /// Maps every pixel of `frame` through the lattice, using `prior` as the
    /// fourth coordinate. Rows are processed in parallel on the current rayon
    /// pool; the result does not depend on the number of workers.
    pub fn apply(&self, frame: &Frame, prior: &PriorMap) -> Result<(Frame, ApplyStats)> {
        frame.ensure_rgb()?;
        if prior.height() != frame.height() || prior.width() != frame.width() {
            return Err(Error::Shape(format!(
                "prior is {}x{} but frame is {}x{}",
                prior.height(),
                prior.width(),
                frame.height(),
                frame.width()
            )));
        }
        let w = frame.width();
        let mut out = vec![0.0f32; frame.data().len()];
        let clamped: u64 = out
            .par_chunks_mut(w * 3)
            .zip(frame.data().par_chunks(w * 3))
            .zip(prior.values().par_chunks(w))
            .map(|((dst, src), e_row)| {
                let mut clamped = 0u64;
                for ((d, s), &e) in dst
                    .chunks_exact_mut(3)
                    .zip(src.chunks_exact(3))
                    .zip(e_row)
                {
                    let (rgb, c) = self.sample_counted([s[0], s[1], s[2]], e);
                    d.copy_from_slice(&rgb);
                    clamped += c as u64;
                }
                clamped
            })
            .sum();
        let frame_out = Frame::new(frame.height(), frame.width(), 3, out)?;
        Ok((
            frame_out,
            ApplyStats {
                pixels: (frame.height() * frame.width()) as u64,
                clamped_values: clamped,
            },
        ))
    }
}

/// Quadrilinear interpolation of `frame` through `lut`, indexed by `(R, G, B, E)`
/// with `E` taken from `prior`.
pub fn quadrilinear_apply(
    lut: &Lattice4D,
    frame: &Frame,
    prior: &PriorMap,
) -> Result<(Frame, ApplyStats)> {
    lut.apply(frame, prior)
}

/// Identity lattice of size `n` on uniform axes.
pub fn make_identity_lattice4d(n: usize) -> Result<Lattice4D> {
    Lattice4D::identity(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::PriorKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lattice(n: usize, rng: &mut ChaCha8Rng) -> Lattice4D {
        let values = (0..n.pow(4) * 3).map(|_| rng.random::<f32>()).collect();
        Lattice4D::new(Lattice4D::uniform_axes(n).unwrap(), values).unwrap()
    }

    #[test]
    fn identity_small() {
        let lut = make_identity_lattice4d(2).unwrap();
        for e in [0.0, 0.3, 1.0] {
            assert_eq!(lut.sample([0.5, 0.5, 0.5], e), [0.5, 0.5, 0.5]);
        }
    }

    #[test]
    fn identity_at_grid_point() {
        let lut = make_identity_lattice4d(17).unwrap();
        assert_eq!(lut.sample([0.25, 0.5, 0.75], 0.0), [0.25, 0.5, 0.75]);
    }

    #[test]
    fn identity_random_queries() {
        let lut = make_identity_lattice4d(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q: [f32; 4] = rng.random();
            let out = lut.sample([q[0], q[1], q[2]], q[3]);
            for c in 0..3 {
                assert!((out[c] - q[c]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rejects_small_size() {
        assert!(matches!(make_identity_lattice4d(1), Err(Error::InvalidSize(_))));
        assert!(matches!(make_identity_lattice4d(0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn rejects_non_finite_values() {
        let mut v = vec![0.0; 16 * 3];
        v[5] = f32::INFINITY;
        assert!(matches!(
            Lattice4D::new(Lattice4D::uniform_axes(2).unwrap(), v),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn grid_points_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2, 3, 5] {
            let lut = random_lattice(n, &mut rng);
            let c = lut.axes()[0].coords().to_vec();
            for s in 0..n {
                for z in 0..n {
                    for y in 0..n {
                        for x in 0..n {
                            let got = lut.sample([c[x], c[y], c[z]], c[s]);
                            assert_eq!(got, lut.entry(x, y, z, s));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn apply_checks_prior_shape() {
        let lut = make_identity_lattice4d(3).unwrap();
        let frame = Frame::filled(4, 4, 3, 0.5).unwrap();
        let prior = PriorMap::new(4, 5, vec![0.0; 20], PriorKind::Fused).unwrap();
        assert!(matches!(lut.apply(&frame, &prior), Err(Error::Shape(_))));
        let gray = Frame::filled(4, 4, 1, 0.5).unwrap();
        let prior = PriorMap::new(4, 4, vec![0.0; 16], PriorKind::Fused).unwrap();
        assert!(matches!(lut.apply(&gray, &prior), Err(Error::Shape(_))));
    }

    #[test]
    fn apply_counts_clamped_inputs() {
        let lut = make_identity_lattice4d(3).unwrap();
        let frame = Frame::new(1, 2, 3, vec![1.5, 0.2, 0.2, -0.1, 0.3, 0.3]).unwrap();
        let prior = PriorMap::new(1, 2, vec![0.5, 1.0], PriorKind::Fused).unwrap();
        let (out, stats) = lut.apply(&frame, &prior).unwrap();
        assert_eq!(stats.clamped_values, 2);
        assert_eq!(stats.pixels, 2);
        assert_eq!(out.data()[0], 1.0);
        assert_eq!(out.data()[3], 0.0);
    }

    proptest! {
        #[test]
        fn corner_weights_partition_unity(seed in any::<u64>(), q in prop::array::uniform4(0.0f32..=1.0)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..6);
            let lut = random_lattice(n, &mut rng);
            let c = lut.corners([q[0], q[1], q[2]], q[3]);
            let sum: f64 = c.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(c.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }

        #[test]
        fn monotone_lattice_gives_monotone_output(
            seed in any::<u64>(),
            r0 in 0.0f32..=1.0, r1 in 0.0f32..=1.0,
            g in 0.0f32..=1.0, b in 0.0f32..=1.0, e in 0.0f32..=1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            // R output non-decreasing along the R axis, arbitrary elsewhere
            let mut values: Vec<f32> = (0..n * n * n * n * 3).map(|_| rng.random()).collect();
            for p in 0..n * n * n {
                let mut acc = 0.0;
                for x in 0..n {
                    acc += rng.random::<f32>() * 0.3;
                    values[3 * (p * n + x)] = acc;
                }
            }
            let lut = Lattice4D::new(Lattice4D::uniform_axes(n).unwrap(), values).unwrap();
            let (lo, hi) = if r0 <= r1 { (r0, r1) } else { (r1, r0) };
            let a = lut.sample([lo, g, b], e)[0];
            let bb = lut.sample([hi, g, b], e)[0];
            prop_assert!(bb >= a - 1e-6);
        }
    }
}
