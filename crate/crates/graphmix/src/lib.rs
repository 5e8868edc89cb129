//! Model-based clustering with mixtures of l1-penalized Gaussian
//! graphical models.
//!
//! Each mixture component is a Gaussian graphical model: a multivariate
//! Gaussian whose sparse precision matrix encodes conditional-independence
//! structure. Cluster assignments and cluster-specific precision matrices
//! are estimated simultaneously by a penalized EM algorithm whose M-step
//! solves one graphical-lasso problem per cluster. The crate also ships
//! the supporting toolkit: a certified graphical-lasso solver with a
//! warm-started regularization path, penalty-level selection by BIC,
//! train/test, cross-validation or a fast pseudo-cluster heuristic,
//! hard-assignment and unpenalized baselines, a synthetic benchmark
//! generator, evaluation metrics, and a reproducible experiment harness.
//!
//! See the `examples/` directory for one runnable program per capability;
//! the `graphmix` binary exposes the same machinery as a small CLI.

pub mod baselines;
pub mod data;
pub mod em;
pub mod error;
pub mod glasso;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod simulation;
pub mod tuning;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use model::{
    log_density, mixture_log_likelihood, penalized_log_likelihood, GaussianComponent,
    MixtureModel, PenaltyConfig, Responsibilities,
};
