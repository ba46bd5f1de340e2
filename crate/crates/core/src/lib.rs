//! Adversarial identification of hybrid analytic simulators.
//!
//! A learned, stochastic, state-action-dependent function supplies contact
//! and actuator parameters to an analytic simulator at every step. It is
//! trained with PPO against a discriminator that tells simulated transition
//! tuples from target-domain ones. A control policy is then refined inside
//! the identified simulator. Fine-tuning, domain randomization and CMA-ES
//! system identification are provided as baselines.

pub mod baselines;
pub mod config;
pub mod discriminator;
pub mod envs;
pub mod error;
pub mod hybrid;
pub mod identify;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod ppo;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
