//! Sequential importance resampling (SIR) for multi-armed bandits.
//!
//! Each arm keeps its own weighted particle approximation of the parameter
//! posterior. Thompson sampling and Bayes-UCB are computed from that random
//! measure, which lets the same loop handle Bernoulli, contextual
//! linear-Gaussian, logistic and categorical-softmax rewards, with static,
//! known linear-Gaussian, or unknown (Rao-Blackwellized) linear dynamics.
//!
//! Module map:
//! - [`distributions`]: RNG streams, samplers, quantiles, small linear algebra
//! - [`reward_models`]: likelihoods, reward sampling, conjugate posteriors
//! - [`dynamics`]: parameter transition kernels and their sufficient statistics
//! - [`smc`]: weighted particle sets, resampling, reweighting, weighted quantiles
//! - [`policies`]: SMC and exact Thompson / Bayes-UCB, uniform baseline
//! - [`environments`]: ground-truth simulators and the scenario catalog
//! - [`harness`]: configs, Monte Carlo sweeps, regret CSVs, replay evaluation

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod dynamics;
pub mod environments;
pub mod error;
pub mod harness;
pub mod policies;
pub mod reward_models;
pub mod smc;

pub use error::{Error, Result};
