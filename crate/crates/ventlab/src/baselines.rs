//! Comparison policies: double-DQN, fixed-coefficient CQL, and discrete
//! batch-constrained Q-learning, all sharing the same network and loop.
//!
//! DDQN and fixed-alpha CQL are exact degenerations of the full objective
//! (alpha0 = 0 resp. beta = 0, lambda_sc = 0). BCQ trains a behavior-cloning
//! head first, then trains the Q-network with the bootstrap argmax
//! restricted to behavior-supported actions.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::net::{backward_batch, forward_batch, ModelConfig, ParamVec};
use crate::rng::{derive_seed, rng_from};
use crate::tcql::{train, Adam, BatchArrays, TargetPolicy, TrainConfig, TrainOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaselineKind {
    Ddqn,
    CqlFixed,
    BcqDiscrete { threshold: f64 },
}

impl BaselineKind {
    pub fn id(&self) -> &'static str {
        match self {
            BaselineKind::Ddqn => "ddqn",
            BaselineKind::CqlFixed => "cql_fixed",
            BaselineKind::BcqDiscrete { .. } => "bcq",
        }
    }
}

/// Behavior-cloning settings for the BCQ head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig { steps: 500, batch_size: 64, lr: 1e-3 }
    }
}

/// Maps a baseline onto the shared objective's configuration.
pub fn baseline_train_config(kind: &BaselineKind, base: &TrainConfig) -> TrainConfig {
    let mut cfg = *base;
    match kind {
        BaselineKind::Ddqn | BaselineKind::BcqDiscrete { .. } => {
            cfg.alpha0 = 0.0;
            cfg.lambda_sc = 0.0;
        }
        BaselineKind::CqlFixed => {
            cfg.beta = 0.0;
            cfg.lambda_sc = 0.0;
        }
    }
    cfg
}

/// Trains the soft-max behavior-cloning head by cross-entropy on dataset
/// actions. Returns the head parameters and the per-step loss trace.
pub fn train_behavior_head(
    windows: &WindowSet,
    model_cfg: &ModelConfig,
    bc: &BcConfig,
    seed: u64,
) -> Result<(ParamVec, Vec<f64>)> {
    if windows.is_empty() {
        return Err(Error::Data("cannot clone behavior from an empty window set".into()));
    }
    let mut params = ParamVec::init(model_cfg, derive_seed(seed, "bc-init", &[]));
    let mut adam = Adam::new(params.len(), 0.9, 0.999, 1e-8);
    let mut rng = rng_from(derive_seed(seed, "bc-minibatch", &[]));
    let n = windows.len();
    let n_actions = model_cfg.n_actions;
    let mut trace = Vec::with_capacity(bc.steps);
    for _ in 0..bc.steps {
        let idx: Vec<usize> = (0..bc.batch_size).map(|_| rng.gen_range(0..n)).collect();
        let batch = BatchArrays::gather(windows, &idx);
        let fwd = forward_batch(&params, batch.states.view(), true)?;
        let b = batch.len();
        let mut dlogits = Array2::<f64>::zeros((b, n_actions));
        let mut loss = 0.0;
        for i in 0..b {
            let row = fwd.q.row(i);
            let a = batch.actions[i];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            loss += -(row[a] - max - z.ln());
            for (j, v) in row.iter().enumerate() {
                dlogits[[i, j]] = (v - max).exp() / z / b as f64;
            }
            dlogits[[i, a]] -= 1.0 / b as f64;
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric("behavior-cloning loss diverged".into()));
        }
        trace.push(loss);
        let mut grads = ParamVec::zeros(model_cfg);
        backward_batch(&params, &fwd, dlogits.view(), &mut grads)?;
        adam.step(&mut params, &grads, bc.lr)?;
    }
    Ok((params, trace))
}

/// A trained baseline: the Q-network run plus, for BCQ, the behavior head.
#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub kind: BaselineKind,
    pub train: TrainOutput,
    pub behavior: Option<ParamVec>,
    pub bc_trace: Vec<f64>,
}

/// Trains one baseline end to end.
pub fn train_baseline(
    kind: &BaselineKind,
    windows: &WindowSet,
    model_cfg: &ModelConfig,
    base_cfg: &TrainConfig,
    bc: &BcConfig,
) -> Result<BaselineOutput> {
    let cfg = baseline_train_config(kind, base_cfg);
    match kind {
        BaselineKind::Ddqn | BaselineKind::CqlFixed => {
            let out = train(windows, model_cfg, &cfg, &TargetPolicy::DoubleQ)?;
            Ok(BaselineOutput { kind: *kind, train: out, behavior: None, bc_trace: Vec::new() })
        }
        BaselineKind::BcqDiscrete { threshold } => {
            if !(*threshold > 0.0 && *threshold <= 1.0) {
                return Err(Error::Config(format!(
                    "BCQ threshold {threshold} must be in (0, 1]"
                )));
            }
            let (behavior, bc_trace) =
                train_behavior_head(windows, model_cfg, bc, derive_seed(cfg.seed, "bc", &[]))?;
            let rule = TargetPolicy::BcqMasked { behavior: behavior.clone(), threshold: *threshold };
            let out = train(windows, model_cfg, &cfg, &rule)?;
            Ok(BaselineOutput { kind: *kind, train: out, behavior: Some(behavior), bc_trace })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, make_windows, DatasetConfig, Episode};
    use crate::sim::{spawn_cohort, CohortRanges, SimConfig};

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            state_dim: 24,
            hidden: 8,
            window: 3,
            n_layers: 1,
            n_heads: 2,
            ff_hidden: 8,
            mlp_hidden: 8,
            n_actions: crate::data::N_ACTIONS,
            use_positional: true,
        }
    }

    fn tiny_windows() -> WindowSet {
        let cohort = spawn_cohort(2, 3, &CohortRanges::default()).unwrap();
        let cfg = DatasetConfig { episodes_per_twin: 2, horizon: 5, ..DatasetConfig::default() };
        let set = generate_dataset(&cohort, &cfg, &SimConfig::default(), 8).unwrap();
        let refs: Vec<&Episode> = set.episodes.iter().collect();
        make_windows(&refs, 3, &set.norm_stats).unwrap()
    }

    #[test]
    fn ddqn_logs_zero_penalty_and_zero_consistency_at_every_step() {
        let ws = tiny_windows();
        let cfg = TrainConfig { total_steps: 6, batch_size: 4, seed: 2, ..TrainConfig::default() };
        let out =
            train_baseline(&BaselineKind::Ddqn, &ws, &tiny_model(), &cfg, &BcConfig::default())
                .unwrap();
        for row in &out.train.metrics {
            assert_eq!(row.coeff_mean, 0.0);
            assert_eq!(row.sc, 0.0);
        }
    }

    #[test]
    fn cql_fixed_coefficient_is_alpha0_at_every_step() {
        let ws = tiny_windows();
        let cfg = TrainConfig {
            total_steps: 6,
            batch_size: 4,
            alpha0: 1.25,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_baseline(
            &BaselineKind::CqlFixed,
            &ws,
            &tiny_model(),
            &cfg,
            &BcConfig::default(),
        )
        .unwrap();
        for row in &out.train.metrics {
            assert_eq!(row.coeff_mean, 1.25);
            assert_eq!(row.sc, 0.0);
        }
    }

    #[test]
    fn behavior_head_learns_a_dominant_action() {
        // Two-region synthetic set: all windows share one action.
        let ws = tiny_windows();
        let mut cloned = ws.clone();
        let dominant = crate::data::ActionIndex::new(1234).unwrap();
        for a in cloned.actions.iter_mut() {
            *a = dominant;
        }
        let bc = BcConfig { steps: 120, batch_size: 8, lr: 3e-3 };
        let (behavior, trace) = train_behavior_head(&cloned, &tiny_model(), &bc, 5).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        let fwd = forward_batch(&behavior, cloned.states.view(), false).unwrap();
        let mut hits = 0;
        for i in 0..cloned.len() {
            if crate::policy::argmax(fwd.q.row(i)) == dominant.as_usize() {
                hits += 1;
            }
        }
        assert!(hits * 2 > cloned.len(), "dominant action argmax in most states");
    }

    #[test]
    fn bcq_checkpoint_carries_the_behavior_head() {
        let ws = tiny_windows();
        let cfg = TrainConfig { total_steps: 4, batch_size: 4, seed: 4, ..TrainConfig::default() };
        let bc = BcConfig { steps: 20, batch_size: 8, lr: 1e-3 };
        let out = train_baseline(
            &BaselineKind::BcqDiscrete { threshold: 0.3 },
            &ws,
            &tiny_model(),
            &cfg,
            &bc,
        )
        .unwrap();
        assert!(out.behavior.is_some());
        assert_eq!(out.bc_trace.len(), 20);
        assert!(train_baseline(
            &BaselineKind::BcqDiscrete { threshold: 0.0 },
            &ws,
            &tiny_model(),
            &cfg,
            &bc
        )
        .is_err());
    }
}
