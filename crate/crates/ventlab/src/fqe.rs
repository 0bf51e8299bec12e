//! Fitted Q-evaluation of a frozen policy, the out-of-distribution initial-Q
//! diagnostic, and the return/mortality correlation.
//!
//! The evaluation network mirrors the policy architecture but is trained
//! from its own initialization purely on (s, a, r, s') tuples plus the
//! frozen policy's action choices at s'; it never touches the policy's
//! training internals.

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::net::{backward_batch, forward_batch, ModelConfig, ParamVec};
use crate::policy::WindowPolicy;
use crate::rng::{derive_seed, rng_from};
use crate::tcql::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FqeConfig {
    pub gamma: f64,
    /// Target refreshes (outer iterations).
    pub refreshes: usize,
    /// Regression epochs per refresh.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Early stop when the mean absolute target shift falls below this.
    pub target_shift_tol: f64,
    /// Optional cap on the number of training transitions used.
    pub subsample: Option<usize>,
    pub seed: u64,
}

impl Default for FqeConfig {
    fn default() -> Self {
        FqeConfig {
            gamma: 0.99,
            refreshes: 20,
            epochs: 5,
            batch_size: 64,
            lr: 1e-3,
            target_shift_tol: 1e-4,
            subsample: None,
            seed: 0,
        }
    }
}

/// A fitted evaluation Q-function and its convergence trace.
#[derive(Debug, Clone)]
pub struct FqeModel {
    pub params: ParamVec,
    pub model_cfg: ModelConfig,
    /// Mean absolute target shift at each refresh.
    pub trace: Vec<f64>,
    pub refreshes_run: usize,
}

fn batched_q(params: &ParamVec, windows: &Array3<f64>, chunk: usize) -> Result<Array2<f64>> {
    let n = windows.dim().0;
    let mut out = Array2::zeros((n, params.cfg.n_actions));
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let fwd = forward_batch(params, windows.slice(ndarray::s![start..end, .., ..]), false)?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(&fwd.q);
        start = end;
    }
    Ok(out)
}

/// Iterated regression toward y = r + gamma * Q(s', pi(s')).
pub fn fit_fqe(
    policy: &dyn WindowPolicy,
    windows: &WindowSet,
    model_cfg: &ModelConfig,
    cfg: &FqeConfig,
) -> Result<FqeModel> {
    if windows.is_empty() {
        return Err(Error::Data("cannot fit FQE on an empty window set".into()));
    }
    if !(cfg.gamma >= 0.0 && cfg.gamma < 1.0) {
        return Err(Error::Config(format!("gamma {} must be in [0, 1)", cfg.gamma)));
    }
    let mut rng = rng_from(derive_seed(cfg.seed, "fqe", &[]));
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    if let Some(cap) = cfg.subsample {
        idx.shuffle(&mut rng);
        idx.truncate(cap.max(1));
        idx.sort_unstable();
    }
    let n = idx.len();
    let (_, l, d) = windows.states.dim();

    let mut states = Array3::zeros((n, l, d));
    let mut next_states = Array3::zeros((n, l, d));
    for (row, i) in idx.iter().enumerate() {
        states.index_axis_mut(Axis(0), row).assign(&windows.window(*i));
        next_states.index_axis_mut(Axis(0), row).assign(&windows.next_window(*i));
    }
    let actions: Vec<usize> = idx.iter().map(|i| windows.actions[*i].as_usize()).collect();
    let rewards: Vec<f64> = idx.iter().map(|i| windows.rewards[*i]).collect();
    let terminals: Vec<bool> = idx.iter().map(|i| windows.terminals[*i]).collect();

    // The policy is frozen, so its next-state actions never change.
    let mut policy_actions = Vec::with_capacity(n);
    for row in 0..n {
        policy_actions.push(policy.select(next_states.index_axis(Axis(0), row))?.as_usize());
    }

    let mut params = ParamVec::init(model_cfg, derive_seed(cfg.seed, "fqe-init", &[]));
    let mut adam = Adam::new(params.len(), 0.9, 0.999, 1e-8);
    let mut prev_targets: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut refreshes_run = 0;

    for _refresh in 0..cfg.refreshes {
        // Targets under the current (frozen for this refresh) parameters.
        let q_next = batched_q(&params, &next_states, 256)?;
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                if terminals[i] {
                    rewards[i]
                } else {
                    rewards[i] + cfg.gamma * q_next[[i, policy_actions[i]]]
                }
            })
            .collect();
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!(
                "FQE targets diverged at refresh {refreshes_run} (trace: {trace:?})"
            )));
        }
        let shift = match &prev_targets {
            Some(prev) => {
                targets.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64
            }
            None => f64::INFINITY,
        };
        if shift.is_finite() {
            trace.push(shift);
            if shift < cfg.target_shift_tol {
                break;
            }
        }
        prev_targets = Some(targets.clone());
        refreshes_run += 1;

        // Regression epochs on the pinned targets.
        let mut order: Vec<usize> = (0..n).collect();
        for _epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let b = chunk.len();
                let mut s = Array3::zeros((b, l, d));
                for (row, i) in chunk.iter().enumerate() {
                    s.index_axis_mut(Axis(0), row).assign(&states.index_axis(Axis(0), *i));
                }
                let fwd = forward_batch(&params, s.view(), true)?;
                let mut dq = Array2::<f64>::zeros((b, params.cfg.n_actions));
                for (row, i) in chunk.iter().enumerate() {
                    let a = actions[*i];
                    dq[[row, a]] = 2.0 * (fwd.q[[row, a]] - targets[*i]) / b as f64;
                }
                let mut grads = ParamVec::zeros(model_cfg);
                backward_batch(&params, &fwd, dq.view(), &mut grads)?;
                adam.step(&mut params, &grads, cfg.lr)?;
            }
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::Numeric(format!(
                "FQE parameter {name} diverged (trace: {trace:?})"
            )));
        }
    }
    Ok(FqeModel { params, model_cfg: *model_cfg, trace, refreshes_run })
}

/// Q(w, pi(w)) under the fitted model for each listed window.
pub fn fqe_values(
    model: &FqeModel,
    policy: &dyn WindowPolicy,
    windows: &WindowSet,
    indices: &[usize],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for i in indices {
        let w = windows.window(*i);
        let a = policy.select(w)?.as_usize();
        let fwd = forward_batch(
            &model.params,
            w.to_owned().insert_axis(Axis(0)).view(),
            false,
        )?;
        out.push(fwd.q[[0, a]]);
    }
    Ok(out)
}

/// Mean of Q(w, pi(w)) over a test set of windows.
pub fn fqe_score(
    model: &FqeModel,
    policy: &dyn WindowPolicy,
    windows: &WindowSet,
    indices: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if indices.is_empty() {
        return Err(Error::Data("empty test set for FQE scoring".into()));
    }
    let values = fqe_values(model, policy, windows, indices)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((mean, values))
}

/// Mean over windows of max_a Q(window, a) under a policy's own Q-network.
pub fn ood_initial_q(params: &ParamVec, windows: &[Array2<f64>]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Data("no windows for the initial-Q diagnostic".into()));
    }
    let mut sum = 0.0;
    for w in windows {
        sum += crate::policy::max_q(params, w.view())?;
    }
    Ok(sum / windows.len() as f64)
}

/// Pearson r with the two-sided t-distribution p-value.
pub fn return_mortality_correlation(returns: &[f64], mortality: &[f64]) -> Result<(f64, f64)> {
    let n = returns.len();
    if n != mortality.len() || n < 3 {
        return Err(Error::Contract(
            "correlation needs paired arrays of length >= 3".into(),
        ));
    }
    let mean_x = returns.iter().sum::<f64>() / n as f64;
    let mean_y = mortality.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = returns[i] - mean_x;
        let dy = mortality[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numeric(
            "correlation undefined: one input has zero variance".into(),
        ));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::Numeric(format!("t-distribution: {e}")))?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}
