//! Noise covariance estimation in multi-task high-dimensional linear models.
//!
//! Given `Y = XB* + E` with Gaussian design rows `N(0, Σ)` and noise rows `N(0, S)`, the
//! crate fits a multi-task elastic-net, computes its interaction matrix Â and corrects
//! the residual covariance for the bias introduced by the fit. Naive, method-of-moments
//! and oracle baselines plus a Monte-Carlo harness are included.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod interaction;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod simgen;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;

pub use data::{CovarianceEstimate, Dataset, Method, PenaltyPair, Truth};
pub use error::{Error, Result};
pub use linalg::Mat;
