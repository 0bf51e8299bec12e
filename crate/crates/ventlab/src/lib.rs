//! Desk-scale offline reinforcement learning for pressure-controlled
//! mechanical ventilation.
//!
//! The crate generates synthetic ICU ventilation episodes from a cohort of
//! mechanistic digital twins, trains a transformer-encoded conservative
//! Q-learning agent plus standard offline-RL baselines on that data, and
//! evaluates the resulting policies by fitted Q-evaluation and by closed-loop
//! rollouts back on the twins with safety-compliance metrics.

pub mod artifact;
pub mod baselines;
pub mod data;
pub mod error;
pub mod fqe;
pub mod net;
pub mod online;
pub mod pipeline;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod tcql;

pub use error::{Error, Result};
