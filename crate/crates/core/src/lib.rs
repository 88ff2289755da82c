//! Variational Bayesian estimation of exponential random graph models with
//! nodal random effects.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: bit-matrix networks with O(1) toggles;
//! * [`statistics`]: sufficient, degree and change statistics;
//! * [`sampler`]: tie-no-tie Metropolis–Hastings simulation;
//! * [`model`]: priors, parameter layout and the gradient of the log joint;
//! * [`vi`]: Gaussian factor-covariance variational approximation fitted by
//!   stochastic gradient ascent;
//! * [`inference`]: covariance correction, credible intervals and
//!   approximate Bayes factors by path sampling;
//! * [`gof`]: posterior predictive goodness-of-fit distributions;
//! * [`oracle`]: exhaustive enumeration for tiny networks.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gof;
pub mod graph;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod sampler;
pub mod statistics;
pub mod vi;

pub use error::{Error, Result};
pub use graph::Network;
pub use model::{Heterogeneity, Hyperparameters, InterceptMode, Model, ModelSpec};
pub use nalgebra::DMatrix;
pub use sampler::SamplerConfig;
pub use statistics::{CovariateTable, StatisticTerm};
pub use vi::{FitConfig, FitResult, VariationalParams};
