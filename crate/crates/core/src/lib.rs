//! Wavelet-prior 4D lookup tables for low-light video enhancement.
//!
//! The crate is organised bottom-up: [`lattice`] holds the lookup tables and
//! their interpolation kernels, [`wavelet`] and [`prior`] build the fourth
//! lookup coordinate, [`fusion`] blends the two priors, [`losses`] and
//! [`metrics`] score results, [`fit`] optimises lattice values and
//! [`pipeline`] ties everything into clip-level enhancement.

pub mod error;
pub mod frame;
pub mod fusion;
pub mod lattice;
pub mod losses;
pub mod fit;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod wavelet;

pub use error::{Error, Result, Stage};
pub use frame::Frame;
