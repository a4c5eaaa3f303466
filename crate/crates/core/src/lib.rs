//! Offline-to-online reinforcement learning.
//!
//! The crate covers the whole pipeline: desk-scale environments with exact
//! oracles, a small differentiable MLP stack, replay and dataset handling,
//! offline and fine-tuning agents, jump-start scheduling driven by fitted Q
//! evaluation, metrics, and a config-driven harness.

pub mod algos;
pub mod analysis;
pub mod approx;
pub mod data;
pub mod env;
pub mod error;
pub mod harness;
pub mod jumpstart;
pub mod training;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
