//! Sparse recovery with the `ℓ₁² − ηℓ₂²` penalty.
//!
//! The crate solves
//!
//! ```text
//! minimize ½‖Ax − y‖² + α‖x‖₁² − β‖x‖₂²,    0 ≤ β ≤ α,
//! ```
//!
//! and its constrained counterpart `min ½‖Ax − y‖² − β‖x‖₂²` over an ℓ₁ ball,
//! together with classical baselines (ISTA, FISTA, ℓ₁−ℓ₂ thresholding and
//! ℓ_{1/2} half thresholding), problem generators for compressive sensing and
//! Gaussian deblurring, and the noise model and quality metrics used to compare
//! them.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linops;
pub mod proxops;
pub mod problems;
pub mod regfun;
pub mod solvers;
mod vecops;

pub use error::{Error, Result};
