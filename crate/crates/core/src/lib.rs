//! Stochastic gradient descent for Cox proportional-hazards models.
//!
//! The crate provides:
//!
//! - right-censored survival data types and the full-sample negative
//!   log-partial likelihood ([`survival`]),
//! - mini-batch construction under stochastic-batch (SB) and fixed-batch
//!   (FB) sampling, plus exact batch-expectation oracles ([`batching`]),
//! - mini-batch partial-likelihood loss, gradient and Hessian for linear
//!   relative risk ([`cox_linear`]) and a small sparse ReLU network
//!   ([`cox_mlp`]),
//! - a projected SGD engine with learning-rate schedules and weighted
//!   iterate averaging ([`sgd`]),
//! - Monte-Carlo estimation of the batch-size-dependent curvature and
//!   sandwich-variance ingredients, and a stratified Newton oracle
//!   ([`inference`]),
//! - survival data simulation with censoring-rate calibration
//!   ([`simulate`]),
//! - reproducible experiment drivers behind the `coxsgd` CLI
//!   ([`experiments`], [`cli`]).

pub mod batching;
pub mod cli;
pub mod cox_linear;
pub mod cox_mlp;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod linalg;
pub mod rng;
pub mod sgd;
pub mod simulate;
pub mod survival;

pub use error::{Error, Result};
pub use survival::{Dataset, SurvivalRecord};
