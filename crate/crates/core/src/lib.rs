//! Channel estimation for massive MIMO receivers with nonlinear hardware
//! impairments.
//!
//! The unknown distortion is replaced by the posterior mean of a Gaussian
//! process conditioned on a small set of pseudo-inputs, and the sparse
//! angular channel is recovered with two nonlinear sparse Bayesian learning
//! solvers that repeatedly linearize that surrogate. Linear baselines, the
//! hybrid-combiner and 1-bit receiver variants, and a Monte-Carlo benchmark
//! runner live alongside.

pub mod bench;
pub mod error;
pub mod estimators;
pub mod impairments;
pub mod linalg;
pub mod model;
pub mod onebit;
pub mod sobol;
pub mod surrogate;
pub mod validate;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
