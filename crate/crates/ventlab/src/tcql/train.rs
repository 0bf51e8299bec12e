//! The gradient-descent training loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::net::{ModelConfig, ParamVec};
use crate::rng::{derive_seed, rng_from};
use crate::tcql::loss::{loss_and_grad, BatchArrays, TargetPolicy, TrainConfig};
use crate::tcql::optim::{clip_grad_norm, polyak_update, Adam, AdamState};

/// One metrics-log row per gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub td: f64,
    pub cql_raw: f64,
    pub coeff_mean: f64,
    pub sc: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ParamVec,
    pub target_params: ParamVec,
    pub opt_state: AdamState,
    pub metrics: Vec<MetricsRow>,
    pub steps: u64,
}

/// Runs `cfg.total_steps` of minibatch gradient descent with periodic Polyak
/// target refreshes. Deterministic given `cfg.seed`.
pub fn train(
    windows: &WindowSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    policy: &TargetPolicy,
) -> Result<TrainOutput> {
    model_cfg.validate()?;
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Data("cannot train on an empty window set".into()));
    }
    if windows.l != model_cfg.window {
        return Err(Error::Contract(format!(
            "window set has L={} but the model expects {}",
            windows.l, model_cfg.window
        )));
    }
    if cfg.lambda_sc > 0.0 && model_cfg.window < 2 {
        return Err(Error::Config(
            "lambda_sc > 0 requires a window length of at least 2".into(),
        ));
    }

    let mut params = ParamVec::init(model_cfg, derive_seed(cfg.seed, "init", &[]));
    let mut target_params = params.clone();
    let mut adam = Adam::new(params.len(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut sample_rng = rng_from(derive_seed(cfg.seed, "minibatch", &[]));
    let mut metrics = Vec::with_capacity(cfg.total_steps);

    let n = windows.len();
    for step in 1..=cfg.total_steps as u64 {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| sample_rng.gen_range(0..n)).collect();
        let batch = BatchArrays::gather(windows, &idx);
        let (breakdown, mut grads, _) =
            loss_and_grad(&batch, &params, &target_params, cfg, policy)?;
        if !breakdown.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at step {step}: {breakdown:?}"
            )));
        }
        let grad_norm = clip_grad_norm(&mut grads, cfg.grad_clip);
        adam.step(&mut params, &grads, cfg.eta)?;
        if let Some(name) = params.first_non_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameter {name} after step {step}"
            )));
        }
        if step as usize % cfg.target_period == 0 {
            polyak_update(&mut target_params, &params, cfg.polyak_rho)?;
        }
        metrics.push(MetricsRow {
            step,
            td: breakdown.td,
            cql_raw: breakdown.cql_raw,
            coeff_mean: breakdown.coeff_mean,
            sc: breakdown.sc,
            total: breakdown.total,
            grad_norm,
        });
    }
    Ok(TrainOutput {
        params,
        target_params,
        opt_state: adam.state,
        metrics,
        steps: cfg.total_steps as u64,
    })
}
