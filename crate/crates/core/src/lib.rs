//! Numerical laboratory for the restricted fractional Laplacian.
//!
//! The crate discretizes `(-Δ)^s` with exterior-zero data on uniform lattices,
//! solves the constrained minimization behind `(-Δ)^s u = u^p - ε u^q`, and
//! evaluates the closed-form constants, Green kernels and blow-up profiles
//! that the numerical solutions are checked against.

pub mod asymptotics;
pub mod bubble;
pub mod cli;
pub mod error;
pub mod fracop;
pub mod greens;
pub mod quad;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
