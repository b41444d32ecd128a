//! Adaptive stochastic optimization for finite-sum problems.
//!
//! The crate provides two adaptive methods and the machinery they are built on:
//!
//! - [`aras`]: adaptive quadratic regularization during the transient phase of
//!   optimization, switched to adaptive sampling with a decaying step once a
//!   Pflug-type diagnostic detects the stationary phase.
//! - [`varchen`]: variance-reduced stochastic damped L-BFGS whose inverse-Hessian
//!   approximation is kept inside prescribed eigenvalue limits using certified,
//!   recursively computed bounds (see [`lbfgs`]).
//!
//! [`regularization`] holds the deterministic adaptive-regularization method with
//! inexact gradients that ARAS derives from, [`baselines`] the reference
//! optimizers (SGD, heavy-ball momentum, SVRG), and [`harness`] the
//! configuration, data ingestion and metrics plumbing used by the CLI.

pub mod aras;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod lbfgs;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod regularization;
pub mod sampling;
pub mod varchen;

pub use error::{Error, Result};
pub use metrics::{Cadence, MetricsRecord, Phase, RunOptions, RunStatus, Trace};
pub use problems::{Dataset, FiniteSumProblem, LossKind};
