//! Conservative Q-learning over transformer-encoded histories: TD loss with
//! double-Q targets, a per-state conservative penalty with an
//! uncertainty-adaptive coefficient, a sequence-consistency regularizer,
//! Polyak target updates, and the training loop.

mod loss;
mod optim;
mod train;

pub use loss::{
    adaptive_coeff, compute_targets, cql_term, loss_and_grad, loss_frozen, sc_loss_pair, td_loss,
    BatchArrays, FrozenParts, LossBreakdown, TargetPolicy, TrainConfig,
};
pub use optim::{clip_grad_norm, polyak_update, Adam, AdamState};
pub use train::{train, MetricsRow, TrainOutput};
