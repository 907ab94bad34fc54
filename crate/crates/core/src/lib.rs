//! Laplace transforms of integrated quadratic functionals of Gaussian
//! Volterra processes, with pricing of quadratic short-rate bonds and
//! variance-type swaps.
//!
//! Two exact backends compute `E[exp(-∫_t^T tr(X_s^T w X_s) ds)]`:
//! [`fredholm`] discretizes the covariance operator on a grid, and [`lift`]
//! solves a finite Riccati system for exponential-sum kernels.
//! [`montecarlo`] provides a seeded, thread-invariant oracle.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covariance;
pub mod error;
pub mod fredholm;
pub mod kernels;
pub mod lift;
pub mod linalg;
pub mod montecarlo;
pub mod pricing;
pub mod quadrature;

pub use error::{Error, Result};
