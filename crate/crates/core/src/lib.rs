//! Sequential simulation-based inference with Gaussian locally linear
//! mapping (GLLiM) surrogates.
//!
//! A run alternates between simulating `(theta, y)` pairs, fitting a joint
//! Gaussian mixture to them by EM, and drawing new parameters from the
//! surrogate posterior at the observation, either directly or through an
//! independence Metropolis-Hastings chain that uses the surrogate
//! likelihood. See [`sequential::run_semple`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod gllim;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod metrics;
pub mod rng;
pub mod sequential;
pub mod tasks;

pub use error::{Error, Result, SimulationError};
