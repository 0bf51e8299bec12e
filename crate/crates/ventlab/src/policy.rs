//! Action-selection interfaces over trained networks.

use ndarray::{ArrayView1, ArrayView2};

use crate::data::ActionIndex;
use crate::error::Result;
use crate::net::{forward_one, ParamVec};

/// Anything that picks an action from a normalized L x d state window.
pub trait WindowPolicy {
    fn select(&self, window: ArrayView2<f64>) -> Result<ActionIndex>;
}

/// Row argmax; exact ties break to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.iter().enumerate() {
        if *v > best_v {
            best_v = *v;
            best = i;
        }
    }
    best
}

/// Greedy deterministic policy over the Q-vector.
pub fn greedy_action(params: &ParamVec, window: ArrayView2<f64>) -> Result<ActionIndex> {
    let out = forward_one(params, window)?;
    ActionIndex::new(argmax(out.q.row(0)))
}

/// Largest action value for a window (the initial-Q diagnostic).
pub fn max_q(params: &ParamVec, window: ArrayView2<f64>) -> Result<f64> {
    let out = forward_one(params, window)?;
    Ok(out.q.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

pub struct GreedyQPolicy<'a> {
    pub params: &'a ParamVec,
}

impl WindowPolicy for GreedyQPolicy<'_> {
    fn select(&self, window: ArrayView2<f64>) -> Result<ActionIndex> {
        greedy_action(self.params, window)
    }
}

/// Pure selection rule of discrete batch-constrained Q-learning: restrict the
/// argmax to actions whose behavior probability is within `threshold` of the
/// best-supported action. Operates on logits; probability ratios are
/// exp(logit - logit_max).
pub fn bcq_select(q_row: ArrayView1<f64>, behavior_logits: ArrayView1<f64>, threshold: f64) -> usize {
    let max_logit = behavior_logits
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut best = argmax(behavior_logits); // never empty: the argmax qualifies
    let mut best_v = f64::NEG_INFINITY;
    for (a, (q, l)) in q_row.iter().zip(behavior_logits.iter()).enumerate() {
        if (l - max_logit).exp() >= threshold && *q > best_v {
            best_v = *q;
            best = a;
        }
    }
    best
}

/// Greedy action over the behavior-admissible set.
pub fn bcq_greedy(
    q_params: &ParamVec,
    behavior: &ParamVec,
    window: ArrayView2<f64>,
    threshold: f64,
) -> Result<ActionIndex> {
    let q = forward_one(q_params, window)?;
    let b = forward_one(behavior, window)?;
    ActionIndex::new(bcq_select(q.q.row(0), b.q.row(0), threshold))
}

pub struct BcqPolicy<'a> {
    pub q_params: &'a ParamVec,
    pub behavior: &'a ParamVec,
    pub threshold: f64,
}

impl WindowPolicy for BcqPolicy<'_> {
    fn select(&self, window: ArrayView2<f64>) -> Result<ActionIndex> {
        bcq_greedy(self.q_params, self.behavior, window, self.threshold)
    }
}

/// Always returns the same action; useful as a data-free reference policy.
pub struct ConstantPolicy(pub ActionIndex);

impl WindowPolicy for ConstantPolicy {
    fn select(&self, _window: ArrayView2<f64>) -> Result<ActionIndex> {
        Ok(self.0)
    }
}
