//! The training objective and its gradients.
//!
//! Total loss = TD + mean_i alpha(u_i) * cql_i + lambda_sc * SC, where the
//! TD targets and the adaptive coefficients alpha(u_i) are constants with
//! respect to the parameters (stop-gradient). `loss_frozen` evaluates the
//! exact same objective at arbitrary parameters with those constants pinned,
//! which is what central finite differences must difference.

use ndarray::{Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::net::{backward_batch, forward_batch, forward_short, ForwardBatch, ParamVec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Base conservative-penalty weight (0 disables the penalty).
    pub alpha0: f64,
    /// Uncertainty scale inside the adaptive coefficient (0 = fixed alpha).
    pub beta: f64,
    /// Soft-max temperature of the penalty.
    pub tau_cql: f64,
    /// Sequence-consistency weight (0 disables the short path).
    pub lambda_sc: f64,
    /// Learning rate.
    pub eta: f64,
    /// Target-network update period in steps.
    pub target_period: usize,
    /// Polyak rate for target updates.
    pub polyak_rho: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub grad_clip: f64,
    /// Consistency loss over the full action-value vector when true,
    /// over the taken action only when false.
    pub sc_full_vector: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            alpha0: 1.0,
            beta: 1.0,
            tau_cql: 1.0,
            lambda_sc: 0.1,
            eta: 3e-4,
            target_period: 1,
            polyak_rho: 0.005,
            batch_size: 32,
            total_steps: 1000,
            seed: 0,
            grad_clip: 10.0,
            sc_full_vector: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 9] = [
            (self.gamma > 0.0 && self.gamma < 1.0, "gamma must be in (0, 1)"),
            (self.alpha0 >= 0.0, "alpha0 must be >= 0"),
            (self.beta >= 0.0, "beta must be >= 0"),
            (self.tau_cql > 0.0, "tau_cql must be > 0"),
            (self.lambda_sc >= 0.0, "lambda_sc must be >= 0"),
            (self.eta > 0.0, "learning rate must be > 0"),
            (
                self.polyak_rho > 0.0 && self.polyak_rho <= 1.0,
                "polyak rho must be in (0, 1]",
            ),
            (self.batch_size >= 1, "batch size must be >= 1"),
            (self.target_period >= 1, "target period must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub td: f64,
    /// Mean unweighted penalty term.
    pub cql_raw: f64,
    /// Mean adaptive coefficient.
    pub coeff_mean: f64,
    /// Mean coefficient-weighted penalty (what enters the total).
    pub cql_weighted: f64,
    pub sc: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.td, self.cql_raw, self.coeff_mean, self.cql_weighted, self.sc, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// One minibatch in dense layout.
#[derive(Debug, Clone)]
pub struct BatchArrays {
    pub states: Array3<f64>,
    pub next_states: Array3<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
}

impl BatchArrays {
    pub fn gather(ws: &WindowSet, idx: &[usize]) -> BatchArrays {
        let b = idx.len();
        let (_, l, d) = ws.states.dim();
        let mut states = Array3::zeros((b, l, d));
        let mut next_states = Array3::zeros((b, l, d));
        let mut actions = Vec::with_capacity(b);
        let mut rewards = Vec::with_capacity(b);
        let mut terminals = Vec::with_capacity(b);
        for (row, i) in idx.iter().enumerate() {
            states.index_axis_mut(Axis(0), row).assign(&ws.window(*i));
            next_states.index_axis_mut(Axis(0), row).assign(&ws.next_window(*i));
            actions.push(ws.actions[*i].as_usize());
            rewards.push(ws.rewards[*i]);
            terminals.push(ws.terminals[*i]);
        }
        BatchArrays { states, next_states, actions, rewards, terminals }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// How bootstrap actions at s' are chosen.
#[derive(Debug, Clone)]
pub enum TargetPolicy {
    /// Double-Q: argmax under the online network, value under the target.
    DoubleQ,
    /// Discrete batch-constrained: argmax restricted to actions whose
    /// behavior-cloned probability is within `threshold` of the best.
    BcqMasked { behavior: ParamVec, threshold: f64 },
}

/// Row argmax with lowest-index tie-breaking.
pub(crate) fn argmax_row(row: ArrayView1<f64>) -> usize {
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

/// Admissible-set mask for one behavior-logit row: p(a)/max p >= threshold.
/// Probabilities are monotone in logits, so the test runs on logits.
pub(crate) fn bcq_admissible(logits: ArrayView1<f64>, threshold: f64) -> Vec<bool> {
    let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // p(a)/p_max = exp(logit_a - logit_max).
    logits
        .iter()
        .map(|l| (l - max_logit).exp() >= threshold)
        .collect()
}

/// Bootstrapped TD targets, treated as constants by every gradient.
pub fn compute_targets(
    batch: &BatchArrays,
    params: &ParamVec,
    target_params: &ParamVec,
    policy: &TargetPolicy,
    gamma: f64,
) -> Result<Vec<f64>> {
    let online_next = forward_batch(params, batch.next_states.view(), false)?;
    let target_next = forward_batch(target_params, batch.next_states.view(), false)?;
    let behavior_next = match policy {
        TargetPolicy::DoubleQ => None,
        TargetPolicy::BcqMasked { behavior, .. } => {
            Some(forward_batch(behavior, batch.next_states.view(), false)?)
        }
    };
    let mut targets = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        if batch.terminals[i] {
            targets.push(batch.rewards[i]);
            continue;
        }
        let q_online = online_next.q.row(i);
        let a_star = match policy {
            TargetPolicy::DoubleQ => argmax_row(q_online),
            TargetPolicy::BcqMasked { threshold, .. } => {
                let logits = behavior_next.as_ref().expect("behavior forward").q.row(i);
                let mask = bcq_admissible(logits, *threshold);
                let mut best = argmax_row(logits); // always admissible
                let mut best_v = f64::NEG_INFINITY;
                for (a, ok) in mask.iter().enumerate() {
                    if *ok && q_online[a] > best_v {
                        best_v = q_online[a];
                        best = a;
                    }
                }
                best
            }
        };
        targets.push(batch.rewards[i] + gamma * target_next.q[[i, a_star]]);
    }
    Ok(targets)
}

/// Mean squared Bellman error against precomputed targets.
pub fn td_loss(q_taken: &[f64], targets: &[f64]) -> f64 {
    let n = q_taken.len().max(1) as f64;
    q_taken
        .iter()
        .zip(targets)
        .map(|(q, y)| (q - y) * (q - y))
        .sum::<f64>()
        / n
}

/// Conservative penalty for one state: tau * logsumexp(q / tau) - q[a_data].
pub fn cql_term(q: ArrayView1<f64>, a_data: usize, tau: f64) -> f64 {
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = q.iter().map(|v| ((v - max) / tau).exp()).sum();
    tau * (sum.ln() + max / tau) - q[a_data]
}

/// Adaptive penalty coefficient alpha0 * exp(beta * u).
pub fn adaptive_coeff(u: f64, alpha0: f64, beta: f64) -> f64 {
    alpha0 * (beta * u).exp()
}

/// Squared L2 distance between full- and short-history action values.
pub fn sc_loss_pair(q_full: ArrayView1<f64>, q_short: ArrayView1<f64>) -> f64 {
    q_full
        .iter()
        .zip(q_short.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Constants pinned by stop-gradient semantics: TD targets and per-sample
/// adaptive coefficients.
#[derive(Debug, Clone)]
pub struct FrozenParts {
    pub targets: Vec<f64>,
    pub coeffs: Vec<f64>,
}

struct Evaluated {
    breakdown: LossBreakdown,
    fwd_full: ForwardBatch,
    fwd_short: Option<ForwardBatch>,
}

fn evaluate(
    batch: &BatchArrays,
    params: &ParamVec,
    cfg: &TrainConfig,
    frozen: &FrozenParts,
    want_cache: bool,
) -> Result<Evaluated> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if frozen.targets.len() != b || frozen.coeffs.len() != b {
        return Err(Error::Contract("frozen parts do not match the batch".into()));
    }
    let use_sc = cfg.lambda_sc > 0.0;
    if use_sc && batch.states.dim().1 < 2 {
        return Err(Error::Contract(
            "sequence-consistency loss requires window length >= 2".into(),
        ));
    }
    let fwd_full = forward_batch(params, batch.states.view(), want_cache)?;
    let fwd_short = if use_sc {
        Some(forward_short(params, batch.states.view(), want_cache)?)
    } else {
        None
    };

    let mut td_sum = 0.0;
    let mut cql_sum = 0.0;
    let mut weighted_sum = 0.0;
    let mut coeff_sum = 0.0;
    let mut sc_sum = 0.0;
    for i in 0..b {
        let q_row = fwd_full.q.row(i);
        let a = batch.actions[i];
        let err = q_row[a] - frozen.targets[i];
        td_sum += err * err;
        let ell = cql_term(q_row, a, cfg.tau_cql);
        cql_sum += ell;
        coeff_sum += frozen.coeffs[i];
        weighted_sum += frozen.coeffs[i] * ell;
        if let Some(fs) = &fwd_short {
            sc_sum += if cfg.sc_full_vector {
                sc_loss_pair(q_row, fs.q.row(i))
            } else {
                let d = q_row[a] - fs.q[[i, a]];
                d * d
            };
        }
    }
    let n = b as f64;
    let td = td_sum / n;
    let cql_raw = cql_sum / n;
    let cql_weighted = weighted_sum / n;
    let coeff_mean = coeff_sum / n;
    let sc = sc_sum / n;
    let total = td + cql_weighted + cfg.lambda_sc * sc;
    Ok(Evaluated {
        breakdown: LossBreakdown { td, cql_raw, coeff_mean, cql_weighted, sc, total },
        fwd_full,
        fwd_short,
    })
}

/// Loss value at `params` with targets and coefficients pinned to `frozen`.
pub fn loss_frozen(
    batch: &BatchArrays,
    params: &ParamVec,
    cfg: &TrainConfig,
    frozen: &FrozenParts,
) -> Result<LossBreakdown> {
    Ok(evaluate(batch, params, cfg, frozen, false)?.breakdown)
}

/// Analytic gradients of the three loss components, separately.
#[derive(Debug, Clone)]
pub struct ComponentGrads {
    /// Gradient of the TD term.
    pub td: ParamVec,
    /// Gradient of the coefficient-weighted penalty term.
    pub cql: ParamVec,
    /// Gradient of lambda_sc times the consistency term.
    pub sc: ParamVec,
}

impl ComponentGrads {
    /// Sum of the components (equals the fused training gradient).
    pub fn total(&self) -> Result<ParamVec> {
        let mut out = self.td.clone();
        out.check_same_shape(&self.cql)?;
        out.check_same_shape(&self.sc)?;
        for i in 0..out.len() {
            out.data[i] += self.cql.data[i] + self.sc.data[i];
        }
        Ok(out)
    }
}

/// Like `loss_and_grad` but with one gradient per loss component, for the
/// per-component finite-difference contract.
pub fn component_grads(
    batch: &BatchArrays,
    params: &ParamVec,
    target_params: &ParamVec,
    cfg: &TrainConfig,
    policy: &TargetPolicy,
) -> Result<(LossBreakdown, ComponentGrads, FrozenParts)> {
    cfg.validate()?;
    let targets = compute_targets(batch, params, target_params, policy, cfg.gamma)?;
    let u_now = forward_batch(params, batch.states.view(), false)?.u;
    let coeffs: Vec<f64> = u_now
        .iter()
        .map(|u| adaptive_coeff(*u, cfg.alpha0, cfg.beta))
        .collect();
    let frozen = FrozenParts { targets, coeffs };
    let evaluated = evaluate(batch, params, cfg, &frozen, true)?;
    let b = batch.len();
    let n = b as f64;
    let n_actions = params.cfg.n_actions;

    let mut dq_td = Array2::<f64>::zeros((b, n_actions));
    let mut dq_cql = Array2::<f64>::zeros((b, n_actions));
    let mut dq_sc_full = Array2::<f64>::zeros((b, n_actions));
    let mut dq_sc_short = Array2::<f64>::zeros((b, n_actions));
    for i in 0..b {
        let q_row = evaluated.fwd_full.q.row(i);
        let a = batch.actions[i];
        dq_td[[i, a]] += 2.0 * (q_row[a] - frozen.targets[i]) / n;
        let max = q_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in q_row.iter() {
            z += ((v - max) / cfg.tau_cql).exp();
        }
        let scale = frozen.coeffs[i] / n;
        for (j, v) in q_row.iter().enumerate() {
            dq_cql[[i, j]] += scale * ((v - max) / cfg.tau_cql).exp() / z;
        }
        dq_cql[[i, a]] -= scale;
        if let Some(fs) = &evaluated.fwd_short {
            let w = cfg.lambda_sc * 2.0 / n;
            if cfg.sc_full_vector {
                for j in 0..n_actions {
                    let diff = q_row[j] - fs.q[[i, j]];
                    dq_sc_full[[i, j]] += w * diff;
                    dq_sc_short[[i, j]] -= w * diff;
                }
            } else {
                let diff = q_row[a] - fs.q[[i, a]];
                dq_sc_full[[i, a]] += w * diff;
                dq_sc_short[[i, a]] -= w * diff;
            }
        }
    }
    let mut td = ParamVec::zeros(&params.cfg);
    backward_batch(params, &evaluated.fwd_full, dq_td.view(), &mut td)?;
    let mut cql = ParamVec::zeros(&params.cfg);
    backward_batch(params, &evaluated.fwd_full, dq_cql.view(), &mut cql)?;
    let mut sc = ParamVec::zeros(&params.cfg);
    if let Some(fs) = &evaluated.fwd_short {
        backward_batch(params, &evaluated.fwd_full, dq_sc_full.view(), &mut sc)?;
        backward_batch(params, fs, dq_sc_short.view(), &mut sc)?;
    }
    Ok((evaluated.breakdown, ComponentGrads { td, cql, sc }, frozen))
}

/// Full objective: computes targets and coefficients at the current
/// parameters, evaluates the loss, and accumulates analytic gradients.
///
/// Returns the breakdown, the gradient, and the frozen constants so callers
/// can re-evaluate the identical objective (finite differences, equivalence
/// tests).
pub fn loss_and_grad(
    batch: &BatchArrays,
    params: &ParamVec,
    target_params: &ParamVec,
    cfg: &TrainConfig,
    policy: &TargetPolicy,
) -> Result<(LossBreakdown, ParamVec, FrozenParts)> {
    cfg.validate()?;
    let targets = compute_targets(batch, params, target_params, policy, cfg.gamma)?;
    // Coefficients need u at the current parameters; one uncached forward.
    let u_now = forward_batch(params, batch.states.view(), false)?.u;
    let coeffs: Vec<f64> = u_now
        .iter()
        .map(|u| adaptive_coeff(*u, cfg.alpha0, cfg.beta))
        .collect();
    let frozen = FrozenParts { targets, coeffs };

    let evaluated = evaluate(batch, params, cfg, &frozen, true)?;
    let b = batch.len();
    let n = b as f64;
    let n_actions = params.cfg.n_actions;

    // dL/dq for the full path.
    let mut dq_full = Array2::<f64>::zeros((b, n_actions));
    let mut dq_short = evaluated
        .fwd_short
        .as_ref()
        .map(|_| Array2::<f64>::zeros((b, n_actions)));
    for i in 0..b {
        let q_row = evaluated.fwd_full.q.row(i);
        let a = batch.actions[i];
        // TD.
        dq_full[[i, a]] += 2.0 * (q_row[a] - frozen.targets[i]) / n;
        // Conservative penalty: softmax(q/tau) - onehot(a), scaled.
        let max = q_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in q_row.iter() {
            z += ((v - max) / cfg.tau_cql).exp();
        }
        let scale = frozen.coeffs[i] / n;
        for (j, v) in q_row.iter().enumerate() {
            dq_full[[i, j]] += scale * ((v - max) / cfg.tau_cql).exp() / z;
        }
        dq_full[[i, a]] -= scale;
        // Sequence consistency.
        if let (Some(fs), Some(dqs)) = (&evaluated.fwd_short, &mut dq_short) {
            let w = cfg.lambda_sc * 2.0 / n;
            if cfg.sc_full_vector {
                for j in 0..n_actions {
                    let diff = q_row[j] - fs.q[[i, j]];
                    dq_full[[i, j]] += w * diff;
                    dqs[[i, j]] -= w * diff;
                }
            } else {
                let diff = q_row[a] - fs.q[[i, a]];
                dq_full[[i, a]] += w * diff;
                dqs[[i, a]] -= w * diff;
            }
        }
    }

    let mut grads = ParamVec::zeros(&params.cfg);
    backward_batch(params, &evaluated.fwd_full, dq_full.view(), &mut grads)?;
    if let (Some(fs), Some(dqs)) = (&evaluated.fwd_short, &dq_short) {
        backward_batch(params, fs, dqs.view(), &mut grads)?;
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Numeric(format!("non-finite gradient in {name}")));
    }
    Ok((evaluated.breakdown, grads, frozen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;
    use approx::assert_relative_eq;
    use ndarray::{arr1, Array3};
    use rand::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            state_dim: 4,
            hidden: 8,
            window: 3,
            n_layers: 1,
            n_heads: 2,
            ff_hidden: 8,
            mlp_hidden: 6,
            n_actions: 5,
            use_positional: true,
        }
    }

    fn random_batch(cfg: &ModelConfig, b: usize, seed: u64) -> BatchArrays {
        let mut rng = crate::rng::rng_from(seed);
        let states =
            Array3::from_shape_fn((b, cfg.window, cfg.state_dim), |_| rng.gen_range(-1.0..1.0));
        let next_states =
            Array3::from_shape_fn((b, cfg.window, cfg.state_dim), |_| rng.gen_range(-1.0..1.0));
        BatchArrays {
            states,
            next_states,
            actions: (0..b).map(|_| rng.gen_range(0..cfg.n_actions)).collect(),
            rewards: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminals: (0..b).map(|i| i % 3 == 0).collect(),
        }
    }

    #[test]
    fn cql_term_hand_values() {
        // q = (0,0), tau=1 -> log 2 regardless of the data action.
        let q = arr1(&[0.0, 0.0]);
        assert_relative_eq!(cql_term(q.view(), 0, 1.0), 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(cql_term(q.view(), 1, 1.0), 2f64.ln(), epsilon = 1e-12);
        // q = (1,0), a_data = 1 -> log(e + 1).
        let q = arr1(&[1.0, 0.0]);
        assert_relative_eq!(
            cql_term(q.view(), 1, 1.0),
            (1f64.exp() + 1.0).ln(),
            epsilon = 1e-12
        );
        // a_data = argmax, tau -> 0: penalty vanishes.
        let q = arr1(&[0.3, -0.2, 1.4]);
        assert!(cql_term(q.view(), 2, 1e-3) < 1e-3);
    }

    #[test]
    fn cql_term_is_non_negative_on_random_vectors() {
        let mut rng = crate::rng::rng_from(5);
        for _ in 0..2000 {
            let q: Vec<f64> = (0..16).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let arr = arr1(&q);
            let a = rng.gen_range(0..16);
            assert!(cql_term(arr.view(), a, rng.gen_range(0.05..3.0)) >= 0.0);
        }
    }

    #[test]
    fn adaptive_coeff_anchors() {
        assert_eq!(adaptive_coeff(0.0, 1.7, 2.0), 1.7);
        assert_relative_eq!(adaptive_coeff(2f64.ln(), 1.0, 1.0), 2.0, epsilon = 1e-12);
        assert_eq!(adaptive_coeff(123.0, 0.5, 0.0), 0.5);
        let mut last = 0.0;
        for i in 0..100 {
            let u = 0.05 * f64::from(i);
            let a = adaptive_coeff(u, 1.0, 0.7);
            assert!(a > last);
            last = a;
        }
    }

    #[test]
    fn sc_pair_hand_values_and_homogeneity() {
        let a = arr1(&[1.0, 0.0]);
        let b = arr1(&[0.0, 0.0]);
        assert_eq!(sc_loss_pair(a.view(), b.view()), 1.0);
        assert_eq!(sc_loss_pair(a.view(), a.view()), 0.0);
        let a3 = arr1(&[3.0, 0.0]);
        let b3 = arr1(&[0.0, 0.0]);
        assert_relative_eq!(
            sc_loss_pair(a3.view(), b3.view()),
            9.0 * sc_loss_pair(a.view(), b.view()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn td_loss_hand_values() {
        // Terminal transition with q=0.3, r=1 contributes (0.3-1)^2.
        assert_relative_eq!(td_loss(&[0.3], &[1.0]), 0.49, epsilon = 1e-12);
        assert_eq!(td_loss(&[0.45], &[0.45]), 0.0);
    }

    #[test]
    fn double_q_target_uses_online_argmax_and_target_value() {
        // Hand 2-action case: online argmax picks action 0, target net value
        // for action 0 is 0.5, gamma 0.9, r 0 -> y = 0.45. Verified through
        // the batch path by reading both forwards directly.
        let cfg = tiny_cfg();
        let params = ParamVec::init(&cfg, 3);
        let target = ParamVec::init(&cfg, 4);
        let batch = random_batch(&cfg, 6, 9);
        let targets =
            compute_targets(&batch, &params, &target, &TargetPolicy::DoubleQ, 0.9).unwrap();
        let online_next = forward_batch(&params, batch.next_states.view(), false).unwrap();
        let target_next = forward_batch(&target, batch.next_states.view(), false).unwrap();
        for i in 0..batch.len() {
            if batch.terminals[i] {
                assert_eq!(targets[i], batch.rewards[i]);
            } else {
                let a_star = argmax_row(online_next.q.row(i));
                assert_relative_eq!(
                    targets[i],
                    batch.rewards[i] + 0.9 * target_next.q[[i, a_star]],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn breakdown_identity_holds_exactly() {
        let cfg = tiny_cfg();
        let params = ParamVec::init(&cfg, 5);
        let target = params.clone();
        let batch = random_batch(&cfg, 8, 11);
        let (bd, _, _) =
            loss_and_grad(&batch, &params, &target, &TrainConfig::default(), &TargetPolicy::DoubleQ)
                .unwrap();
        assert_eq!(bd.total, bd.td + bd.cql_weighted + 0.1 * bd.sc);
        assert!(bd.cql_raw >= 0.0);
        assert!(bd.is_finite());
    }

    #[test]
    fn alpha_zero_lambda_zero_reduces_to_pure_td() {
        let cfg = tiny_cfg();
        let params = ParamVec::init(&cfg, 6);
        let target = ParamVec::init(&cfg, 7);
        let batch = random_batch(&cfg, 5, 13);
        let tc = TrainConfig { alpha0: 0.0, lambda_sc: 0.0, ..TrainConfig::default() };
        tc.validate().unwrap();
        let (bd, _, frozen) =
            loss_and_grad(&batch, &params, &target, &tc, &TargetPolicy::DoubleQ).unwrap();
        assert_eq!(bd.total, bd.td);
        assert_eq!(bd.cql_weighted, 0.0);
        assert_eq!(bd.sc, 0.0);
        // Independent recomputation of the TD term.
        let fwd = forward_batch(&params, batch.states.view(), false).unwrap();
        let q_taken: Vec<f64> =
            (0..batch.len()).map(|i| fwd.q[[i, batch.actions[i]]]).collect();
        assert_relative_eq!(bd.td, td_loss(&q_taken, &frozen.targets), epsilon = 1e-14);
    }

    #[test]
    fn loss_frozen_matches_loss_and_grad_value() {
        let cfg = tiny_cfg();
        let params = ParamVec::init(&cfg, 8);
        let target = ParamVec::init(&cfg, 9);
        let batch = random_batch(&cfg, 7, 17);
        let tc = TrainConfig::default();
        let (bd, _, frozen) =
            loss_and_grad(&batch, &params, &target, &tc, &TargetPolicy::DoubleQ).unwrap();
        let bd2 = loss_frozen(&batch, &params, &tc, &frozen).unwrap();
        assert_eq!(bd.total, bd2.total);
        assert_eq!(bd.td, bd2.td);
        assert_eq!(bd.sc, bd2.sc);
    }

    #[test]
    fn fused_gradient_equals_component_sum() {
        let cfg = tiny_cfg();
        let params = ParamVec::init(&cfg, 21);
        let target = ParamVec::init(&cfg, 22);
        let batch = random_batch(&cfg, 6, 23);
        let tc = TrainConfig::default();
        let (bd_a, fused, _) =
            loss_and_grad(&batch, &params, &target, &tc, &TargetPolicy::DoubleQ).unwrap();
        let (bd_b, comps, _) =
            component_grads(&batch, &params, &target, &tc, &TargetPolicy::DoubleQ).unwrap();
        assert_eq!(bd_a.total, bd_b.total);
        let sum = comps.total().unwrap();
        let scale = fused.l2_norm().max(1e-12);
        let mut max_rel = 0.0f64;
        for i in 0..fused.len() {
            max_rel = max_rel.max((fused.data[i] - sum.data[i]).abs() / scale);
        }
        assert!(max_rel < 1e-12, "fused vs component-sum gradient gap {max_rel}");
    }

    #[test]
    fn bcq_admissible_always_contains_the_behavior_argmax() {
        let logits = arr1(&[0.2, 1.5, -3.0, 1.5]);
        for threshold in [1e-6, 0.3, 1.0] {
            let mask = bcq_admissible(logits.view(), threshold);
            assert!(mask[argmax_row(logits.view())]);
        }
        // threshold 1.0 keeps only maxima (both tied here).
        let mask = bcq_admissible(logits.view(), 1.0);
        assert_eq!(mask, vec![false, true, false, true]);
    }
}
