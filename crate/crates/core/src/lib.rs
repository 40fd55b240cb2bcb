//! Two-stage kernel ridge regression for continuous treatment effect functions.
//!
//! The estimator first fits the conditional mean `f(x, a)` by kernel ridge
//! regression on the joint covariate/treatment space, averages the fit over the
//! empirical covariate distribution at sampled treatment levels to build
//! pseudo-outcomes, and finally smooths those pseudo-outcomes with a second
//! kernel ridge regression on the treatment axis alone.
//!
//! Crate layout:
//!
//! - [`kernels`]: kernel families, Gram matrices, median-heuristic length scales
//! - [`krr`]: dual ridge solves, prediction, leave-one-out scores, Nyström
//! - [`tef`]: datasets and the two-stage estimator
//! - [`selection`]: proxy-validation choice of the second-stage regularizer
//! - [`baselines`]: plug-in marginalization and direct regression
//! - [`synth`]: data generators and CSV I/O
//! - [`eval`]: error metrics, spectral diagnostics, rate fits, benchmarks

pub mod baselines;
mod error;
pub mod eval;
pub mod kernels;
pub mod krr;
mod linalg;
mod points;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod tef;

pub use error::{Error, ErrorClass, Result};
pub use points::Points;
