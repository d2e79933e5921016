//! 3D and 4D lookup tables, their interpolation kernels and basis blending.

mod axis;
mod fuse;
pub mod io;
mod lattice3d;
mod lattice4d;

pub use axis::{CoordinateAxis, Located};
pub use fuse::{fuse_basis_luts, FusionWeights, MergeMode};
pub use lattice3d::{trilinear_apply, Lattice3D};
pub use lattice4d::{make_identity_lattice4d, quadrilinear_apply, Corners, Lattice4D};

/// Per-call bookkeeping for an interpolation pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub pixels: u64,
    /// Number of input scalars (R, G, B or E) that fell outside `[0, 1]`.
    pub clamped_values: u64,
}

impl std::ops::Add for ApplyStats {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            pixels: self.pixels + rhs.pixels,
            clamped_values: self.clamped_values + rhs.clamped_values,
        }
    }
}
