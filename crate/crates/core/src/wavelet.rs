//! Single-level 2D Haar analysis and synthesis.
//!
//! Uses the averaging normalisation: for a 2×2 block
//!
//! ```text
//! a b
//! c d
//! ```
//!
//! `ll = (a+b+c+d)/4`, `lh = (a−b+c−d)/4`, `hl = (a+b−c−d)/4`,
//! `hh = (a−b−c+d)/4`. The low band is the local mean, so it stays in the
//! input's range. Frames with an odd height or width are padded by
//! replicating the last row/column, giving bands of `ceil(H/2)×ceil(W/2)`.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::frame::Frame;

/// The four sub-bands of a one-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBands {
    pub ll: Frame,
    pub lh: Frame,
    pub hl: Frame,
    pub hh: Frame,
    /// The input had an odd dimension and was edge-padded before analysis.
    pub padded: bool,
}

impl WaveletBands {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.ll.shape()
    }
}

/// Haar analysis of one 2×2 block, returning `[ll, lh, hl, hh]`.
#[inline]
pub fn analyze_block<T: Float>(a: T, b: T, c: T, d: T) -> [T; 4] {
    let q = T::from(0.25).unwrap();
    // pairwise grouping keeps constant blocks exact: ll = a, details = 0
    [
        q * ((a + b) + (c + d)),
        q * ((a - b) + (c - d)),
        q * ((a + b) - (c + d)),
        q * ((a - b) - (c - d)),
    ]
}

/// Inverse of [`analyze_block`], returning `[a, b, c, d]`.
#[inline]
pub fn synthesize_block<T: Float>(ll: T, lh: T, hl: T, hh: T) -> [T; 4] {
    [
        ll + lh + hl + hh,
        ll - lh + hl - hh,
        ll + lh - hl - hh,
        ll - lh - hl + hh,
    ]
}

/// Forward transform.
pub fn dwt2(frame: &Frame) -> Result<WaveletBands> {
    let (h, w, ch) = frame.shape();
    if h == 0 || w == 0 {
        return Err(Error::Shape("cannot transform an empty frame".into()));
    }
    let (bh, bw) = (h.div_ceil(2), w.div_ceil(2));
    let padded = h % 2 == 1 || w % 2 == 1;
    let len = bh * bw * ch;
    let mut ll = Vec::with_capacity(len);
    let mut lh = Vec::with_capacity(len);
    let mut hl = Vec::with_capacity(len);
    let mut hh = Vec::with_capacity(len);
    for by in 0..bh {
        let y0 = 2 * by;
        let y1 = (y0 + 1).min(h - 1);
        for bx in 0..bw {
            let x0 = 2 * bx;
            let x1 = (x0 + 1).min(w - 1);
            for c in 0..ch {
                let [l, v, hz, d] = analyze_block(
                    frame.get(y0, x0, c),
                    frame.get(y0, x1, c),
                    frame.get(y1, x0, c),
                    frame.get(y1, x1, c),
                );
                ll.push(l);
                lh.push(v);
                hl.push(hz);
                hh.push(d);
            }
        }
    }
    Ok(WaveletBands {
        ll: Frame::new(bh, bw, ch, ll)?,
        lh: Frame::new(bh, bw, ch, lh)?,
        hl: Frame::new(bh, bw, ch, hl)?,
        hh: Frame::new(bh, bw, ch, hh)?,
        padded,
    })
}

/// Inverse transform. Always produces a `2·bh × 2·bw` frame; crop to undo
/// any padding added by [`dwt2`].
pub fn idwt2(bands: &WaveletBands) -> Result<Frame> {
    let shape = bands.ll.shape();
    for (name, band) in [("lh", &bands.lh), ("hl", &bands.hl), ("hh", &bands.hh)] {
        if band.shape() != shape {
            return Err(Error::Shape(format!(
                "{name} band is {:?}, ll band is {shape:?}",
                band.shape()
            )));
        }
    }
    let (bh, bw, ch) = shape;
    let (h, w) = (2 * bh, 2 * bw);
    let mut out = vec![0.0f32; h * w * ch];
    let idx = |y: usize, x: usize, c: usize| (y * w + x) * ch + c;
    for by in 0..bh {
        for bx in 0..bw {
            for c in 0..ch {
                let [a, b, cc, d] = synthesize_block(
                    bands.ll.get(by, bx, c),
                    bands.lh.get(by, bx, c),
                    bands.hl.get(by, bx, c),
                    bands.hh.get(by, bx, c),
                );
                out[idx(2 * by, 2 * bx, c)] = a;
                out[idx(2 * by, 2 * bx + 1, c)] = b;
                out[idx(2 * by + 1, 2 * bx, c)] = cc;
                out[idx(2 * by + 1, 2 * bx + 1, c)] = d;
            }
        }
    }
    Frame::new(h, w, ch, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(h: usize, w: usize, c: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(h, w, c, |_, _, _| rng.random()).unwrap()
    }

    #[test]
    fn constant_frame() {
        let f = Frame::filled(6, 8, 3, 0.6).unwrap();
        let b = dwt2(&f).unwrap();
        assert!(b.ll.data().iter().all(|&v| v == 0.6));
        for band in [&b.lh, &b.hl, &b.hh] {
            assert!(band.data().iter().all(|&v| v == 0.0));
        }
        assert!(!b.padded);
    }

    #[test]
    fn single_block() {
        let f = Frame::new(2, 2, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = dwt2(&f).unwrap();
        assert_eq!(b.ll.data(), &[0.25]);
        assert_eq!(b.lh.data(), &[0.25]);
        assert_eq!(b.hl.data(), &[0.25]);
        assert_eq!(b.hh.data(), &[0.25]);
    }

    #[test]
    fn roundtrip_64() {
        let f = random_frame(64, 64, 3, 1);
        let back = idwt2(&dwt2(&f).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(f.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn inverse_of_zero_and_constant_bands() {
        let z = Frame::filled(3, 4, 3, 0.0).unwrap();
        let bands = WaveletBands {
            ll: z.clone(),
            lh: z.clone(),
            hl: z.clone(),
            hh: z.clone(),
            padded: false,
        };
        assert!(idwt2(&bands).unwrap().data().iter().all(|&v| v == 0.0));
        let bands = WaveletBands {
            ll: Frame::filled(3, 4, 3, 0.5).unwrap(),
            ..bands
        };
        let f = idwt2(&bands).unwrap();
        assert_eq!(f.shape(), (6, 8, 3));
        assert!(f.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn random_bands_roundtrip() {
        let bands = WaveletBands {
            ll: random_frame(5, 7, 3, 2),
            lh: random_frame(5, 7, 3, 3),
            hl: random_frame(5, 7, 3, 4),
            hh: random_frame(5, 7, 3, 5),
            padded: false,
        };
        let again = dwt2(&idwt2(&bands).unwrap()).unwrap();
        for (x, y) in [
            (&again.ll, &bands.ll),
            (&again.lh, &bands.lh),
            (&again.hl, &bands.hl),
            (&again.hh, &bands.hh),
        ] {
            for (a, b) in x.data().iter().zip(y.data()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn mismatched_bands() {
        let bands = WaveletBands {
            ll: Frame::filled(2, 2, 3, 0.0).unwrap(),
            lh: Frame::filled(2, 3, 3, 0.0).unwrap(),
            hl: Frame::filled(2, 2, 3, 0.0).unwrap(),
            hh: Frame::filled(2, 2, 3, 0.0).unwrap(),
            padded: false,
        };
        assert!(matches!(idwt2(&bands), Err(Error::Shape(_))));
    }

    #[test]
    fn odd_dimensions_are_edge_padded() {
        let f = random_frame(5, 3, 3, 6);
        let b = dwt2(&f).unwrap();
        assert!(b.padded);
        assert_eq!(b.shape(), (3, 2, 3));
        let back = idwt2(&b).unwrap();
        assert_eq!(back.shape(), (6, 4, 3));
        let cropped = back.crop(0, 0, 5, 3).unwrap();
        for (a, b) in cropped.data().iter().zip(f.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        // replicated last row
        for x in 0..4 {
            for c in 0..3 {
                assert!((back.get(5, x, c) - back.get(4, x, c)).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn double_precision_blocks_are_exact_to_1e12() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let v: [f64; 4] = rng.random();
            let [ll, lh, hl, hh] = analyze_block(v[0], v[1], v[2], v[3]);
            let back = synthesize_block(ll, lh, hl, hh);
            for i in 0..4 {
                assert!((back[i] - v[i]).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ll_stays_in_unit_range(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
            let f = random_frame(h, w, 3, seed);
            let b = dwt2(&f).unwrap();
            prop_assert!(b.ll.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn ll_is_shift_covariant(seed in any::<u64>(), dy in 0usize..3, dx in 0usize..3) {
            let base = random_frame(16, 16, 3, seed);
            let (sy, sx) = (2 * dy, 2 * dx);
            let shifted = Frame::from_fn(16, 16, 3, |y, x, c| {
                base.get((y + sy).min(15), (x + sx).min(15), c)
            }).unwrap();
            let a = dwt2(&base).unwrap().ll;
            let b = dwt2(&shifted).unwrap().ll;
            for y in 0..8 - dy {
                for x in 0..8 - dx {
                    for c in 0..3 {
                        prop_assert_eq!(b.get(y, x, c), a.get(y + dy, x + dx, c));
                    }
                }
            }
        }
    }
}
