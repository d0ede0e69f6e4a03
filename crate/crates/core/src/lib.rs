//! Sketched square-root LASSO.
//!
//! Solves many related square-root LASSO instances fast by sketching the
//! data matrix once as `X ≈ P Qᵀ`, reducing every instance to a small
//! `(k+1)`-row robust problem, and solving that with a log-barrier
//! interior-point method whose per-iteration cost does not depend on the
//! number of observations.

pub mod bench;
pub mod data;
pub mod error;
pub mod io;
pub mod kernels;
pub mod multi;
pub mod nonrobust;
pub mod reduction;
pub mod sketch;
pub mod solver;

pub use error::{Error, Result};
pub use sketch::Sketch;

/// Column-major dense matrix of `f64`, the workhorse type throughout.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense `f64` vector.
pub type Vec64 = nalgebra::DVector<f64>;
