//! The differentiable sequence model: a transformer encoder over an L-step
//! state history, a Q-head over all discrete actions, and a linear
//! uncertainty head whose across-step variance flags unfamiliar histories.
//!
//! Parameters live in one flat `f64` vector with a named layout, which keeps
//! the optimizer, Polyak averaging, checkpointing, and coordinate-wise
//! finite-difference checks trivial. Backward passes are hand-written per
//! stage and verified against central differences.

mod backward;
mod config;
mod forward;
mod gradcheck;
mod params;

pub use backward::backward_batch;
pub use config::ModelConfig;
pub use forward::{forward_batch, forward_one, forward_short, positional_encoding, ForwardBatch};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{ParamEntry, ParamLayout, ParamVec};
