use crate::error::{Error, Result};

/// Sampling coordinates along one lattice dimension.
///
/// Always starts at 0, ends at 1 and is strictly increasing, which is what
/// lets [`CoordinateAxis::locate`] use a bisection search.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateAxis {
    coords: Vec<f32>,
    uniform: bool,
}

/// Result of locating a scalar on an axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    /// Lower cell corner, in `0..=n-2`.
    pub index: usize,
    /// Position inside the cell, in `[0, 1]`.
    pub offset: f32,
    /// The input was outside `[0, 1]` (or NaN) and was clamped.
    pub clamped: bool,
}

#[inline]
fn uniform_coord(i: usize, n: usize) -> f32 {
    i as f32 / (n - 1) as f32
}

impl CoordinateAxis {
    /// Evenly spaced coordinates `i / (n - 1)`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize(format!(
                "an axis needs at least 2 sampling points, got {n}"
            )));
        }
        Ok(Self {
            coords: (0..n).map(|i| uniform_coord(i, n)).collect(),
            uniform: true,
        })
    }

    pub fn new(coords: Vec<f32>) -> Result<Self> {
        let n = coords.len();
        if n < 2 {
            return Err(Error::InvalidSize(format!(
                "an axis needs at least 2 sampling points, got {n}"
            )));
        }
        if coords[0] != 0.0 || coords[n - 1] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "axis must span [0, 1], got [{}, {}]",
                coords[0],
                coords[n - 1]
            )));
        }
        if let Some(w) = coords.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(format!(
                "axis coordinates must be strictly increasing (at index {w})"
            )));
        }
        let uniform = coords
            .iter()
            .enumerate()
            .all(|(i, &c)| c.to_bits() == uniform_coord(i, n).to_bits());
        Ok(Self { coords, uniform })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn coords(&self) -> &[f32] {
        &self.coords
    }

    /// True when the coordinates are bit-identical to [`CoordinateAxis::uniform`].
    #[inline]
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Finds the cell containing `v`.
    ///
    /// Returns the largest `index <= n - 2` with `coords[index] <= v`, so a
    /// value sitting on an interior coordinate resolves to the cell above it
    /// with offset 0, and `v = 1` resolves to the last cell with offset 1.
    #[inline]
    pub fn locate(&self, v: f32) -> Located {
        let (v, clamped) = clamp_unit(v);
        let index = self.cell_index(v);
        let lo = self.coords[index];
        let hi = self.coords[index + 1];
        let offset = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        Located {
            index,
            offset,
            clamped,
        }
    }

    /// Like [`CoordinateAxis::locate`] but with the offset in double precision.
    /// The cell index is the same one the single-precision path picks.
    #[inline]
    pub fn locate_f64(&self, v: f32) -> (usize, f64, bool) {
        let (v, clamped) = clamp_unit(v);
        let index = self.cell_index(v);
        let lo = self.coords[index] as f64;
        let hi = self.coords[index + 1] as f64;
        let offset = ((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0);
        (index, offset, clamped)
    }

    #[inline]
    fn cell_index(&self, v: f32) -> usize {
        let n = self.coords.len();
        let last = n - 2;
        if self.uniform {
            // direct guess, then settle against the stored coordinates so the
            // answer matches the bisection path bit for bit
            let mut i = ((v * (n - 1) as f32) as usize).min(last);
            while i > 0 && self.coords[i] > v {
                i -= 1;
            }
            while i < last && self.coords[i + 1] <= v {
                i += 1;
            }
            i
        } else {
            self.coords[1..n - 1].partition_point(|&c| c <= v)
        }
    }
}

#[inline]
fn clamp_unit(v: f32) -> (f32, bool) {
    if (0.0..=1.0).contains(&v) {
        (v, false)
    } else if v > 1.0 {
        (1.0, true)
    } else {
        // negative or NaN
        (0.0, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_scan(coords: &[f32], v: f32) -> usize {
        let n = coords.len();
        (0..n - 1)
            .rev()
            .find(|&i| coords[i] <= v)
            .map(|i| i.min(n - 2))
            .unwrap()
    }

    #[test]
    fn uniform_midpoint() {
        let axis = CoordinateAxis::uniform(17).unwrap();
        let loc = axis.locate(0.5);
        assert_eq!(loc.index, 8);
        assert_eq!(loc.offset, 0.0);
        assert!(!loc.clamped);
    }

    #[test]
    fn upper_boundary() {
        for n in [2, 3, 17, 33] {
            let axis = CoordinateAxis::uniform(n).unwrap();
            let loc = axis.locate(1.0);
            assert_eq!(loc.index, n - 2);
            assert_eq!(loc.offset, 1.0);
        }
        let axis = CoordinateAxis::new(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        assert_eq!(axis.locate(1.0).index, 2);
        assert_eq!(axis.locate(1.0).offset, 1.0);
    }

    #[test]
    fn non_uniform_axis() {
        let axis = CoordinateAxis::new(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        assert!(!axis.is_uniform());
        let loc = axis.locate(0.25);
        assert_eq!(loc.index, linear_scan(axis.coords(), 0.25));
        assert_eq!(loc.index, 1);
        assert!((loc.offset - 0.5).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_is_clamped_and_flagged() {
        let axis = CoordinateAxis::uniform(5).unwrap();
        let lo = axis.locate(-0.2);
        assert_eq!((lo.index, lo.offset, lo.clamped), (0, 0.0, true));
        let hi = axis.locate(1.7);
        assert_eq!((hi.index, hi.offset, hi.clamped), (3, 1.0, true));
        assert!(axis.locate(f32::NAN).clamped);
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(matches!(CoordinateAxis::uniform(1), Err(Error::InvalidSize(_))));
        assert!(CoordinateAxis::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(CoordinateAxis::new(vec![0.1, 1.0]).is_err());
        assert!(CoordinateAxis::new(vec![0.0, 0.9]).is_err());
        assert!(CoordinateAxis::new(vec![0.0, f32::NAN, 1.0]).is_err());
    }

    #[test]
    fn explicit_uniform_coords_are_detected() {
        let u = CoordinateAxis::uniform(9).unwrap();
        let e = CoordinateAxis::new(u.coords().to_vec()).unwrap();
        assert!(e.is_uniform());
    }

    fn arb_axis() -> impl Strategy<Value = CoordinateAxis> {
        prop::collection::vec(0.001f32..1.0, 0..30).prop_map(|mut inner| {
            inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
            inner.dedup();
            let mut coords = vec![0.0];
            coords.extend(inner.into_iter().filter(|&c| c > 0.0 && c < 1.0));
            coords.push(1.0);
            CoordinateAxis::new(coords).unwrap()
        })
    }

    proptest! {
        #[test]
        fn locate_matches_linear_scan(axis in arb_axis(), v in 0.0f32..=1.0) {
            let loc = axis.locate(v);
            let c = axis.coords();
            prop_assert_eq!(loc.index, linear_scan(c, v));
            prop_assert!(c[loc.index] <= v && v <= c[loc.index + 1]);
            prop_assert!((0.0..=1.0).contains(&loc.offset));
        }

        #[test]
        fn uniform_fast_path_matches_bisection(n in 2usize..40, v in 0.0f32..=1.0) {
            let axis = CoordinateAxis::uniform(n).unwrap();
            let c = axis.coords();
            let bisect = c[1..n - 1].partition_point(|&x| x <= v);
            prop_assert_eq!(axis.locate(v).index, bisect);
        }
    }
}
