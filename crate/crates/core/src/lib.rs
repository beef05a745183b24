//! Mode jumping MCMC for Bayesian variable selection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod evaluator;
pub mod likelihoods;
pub mod math;
pub mod modelspace;
pub mod optimizers;
pub mod proposals;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use modelspace::{ModelCache, ModelRecord, ModelVector};
