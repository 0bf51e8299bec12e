//! Stage implementations behind the CLI subcommands. Every stage writes an
//! artifact plus a manifest recording its config snapshot, seed, and input
//! hashes, and refuses inputs whose hashes no longer match.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::artifact::{
    finish_artifact, load_checkpoint, load_cohort, load_episode_set, save_checkpoint, save_cohort,
    save_episode_set, verify_artifact, write_action_histogram_csv, write_metrics_csv, Checkpoint,
    PolicyKind,
};
use crate::baselines::{train_baseline, train_behavior_head, BaselineKind};
use crate::data::{generate_dataset, make_windows, predicted_mortality, Episode, WindowSet};
use crate::error::{Error, Result};
use crate::fqe::{fit_fqe, fqe_score, fqe_values, ood_initial_q, return_mortality_correlation};
use crate::net::ParamVec;
use crate::online::{
    evaluate_policy_online, ood_windows_extended_params, ood_windows_feature_shift,
    tile_initial_windows, MeanStd, OnlineReport, OodMode, RolloutConfig, RolloutPolicy,
};
use crate::pipeline::config::RunConfig;
use crate::policy::{BcqPolicy, GreedyQPolicy, WindowPolicy};
use crate::rng::derive_seed;
use crate::sim::spawn_cohort;
use crate::tcql::{train, TargetPolicy};

/// Which policy a CLI invocation refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySelector {
    Checkpoint(PathBuf),
    Clinician,
}

impl PolicySelector {
    pub fn parse(arg: &str) -> Self {
        if arg == "clinician" {
            PolicySelector::Clinician
        } else {
            PolicySelector::Checkpoint(PathBuf::from(arg))
        }
    }
}

/// Writes the twin cohort file.
pub fn spawn_cohort_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let seed = derive_seed(cfg.master_seed, "cohort", &[]);
    let cohort = spawn_cohort(cfg.cohort.n, seed, &cfg.cohort.ranges)?;
    save_cohort(out, &cohort, seed, &cfg.cohort.ranges)?;
    finish_artifact(
        out,
        "ventlab.cohort.v1",
        seed,
        serde_json::to_value(&cfg.cohort).expect("section serializes"),
        BTreeMap::new(),
    )
}

/// Generates the offline episode dataset from a cohort file.
pub fn gen_data_cmd(cfg: &RunConfig, cohort_path: &Path, out: &Path) -> Result<()> {
    cfg.validate()?;
    let cohort_hash = verify_artifact(cohort_path)?;
    let cohort = load_cohort(cohort_path)?;
    let seed = derive_seed(cfg.master_seed, "dataset", &[]);
    let set = generate_dataset(&cohort.twins, &cfg.dataset, &cfg.sim, seed)?;
    save_episode_set(out, &set, &cfg.sim)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("cohort".to_string(), cohort_hash);
    finish_artifact(
        out,
        "ventlab.episodes.v1",
        seed,
        serde_json::json!({ "dataset": cfg.dataset, "sim": cfg.sim }),
        inputs,
    )
}

fn train_windows(set: &crate::data::EpisodeSet, l: usize) -> Result<WindowSet> {
    let train_refs: Vec<&Episode> = set.train_episodes();
    make_windows(&train_refs, l, &set.norm_stats)
}

fn test_windows(set: &crate::data::EpisodeSet, l: usize) -> Result<WindowSet> {
    let test_refs: Vec<&Episode> = set.test_episodes();
    make_windows(&test_refs, l, &set.norm_stats)
}

/// Trains one policy and writes its checkpoint plus the metrics log.
pub fn train_cmd(
    cfg: &RunConfig,
    data_path: &Path,
    out: &Path,
    baseline: Option<&str>,
    seed_override: Option<u64>,
) -> Result<()> {
    cfg.validate()?;
    let data_hash = verify_artifact(data_path)?;
    let (set, _) = load_episode_set(data_path)?;
    let windows = train_windows(&set, cfg.model.window)?;

    let mut train_cfg = cfg.train;
    if let Some(seed) = seed_override {
        train_cfg.seed = seed;
    }
    let (kind, output, behavior) = match baseline {
        None => {
            let out = train(&windows, &cfg.model, &train_cfg, &TargetPolicy::DoubleQ)?;
            (PolicyKind::TCql, out, None)
        }
        Some("ddqn") => {
            let b = train_baseline(
                &BaselineKind::Ddqn,
                &windows,
                &cfg.model,
                &train_cfg,
                &cfg.bcq.bc,
            )?;
            (PolicyKind::Ddqn, b.train, b.behavior)
        }
        Some("cql") => {
            let b = train_baseline(
                &BaselineKind::CqlFixed,
                &windows,
                &cfg.model,
                &train_cfg,
                &cfg.bcq.bc,
            )?;
            (PolicyKind::CqlFixed, b.train, b.behavior)
        }
        Some("bcq") => {
            let b = train_baseline(
                &BaselineKind::BcqDiscrete { threshold: cfg.bcq.threshold },
                &windows,
                &cfg.model,
                &train_cfg,
                &cfg.bcq.bc,
            )?;
            (PolicyKind::Bcq { threshold: cfg.bcq.threshold }, b.train, b.behavior)
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown baseline {other}; expected ddqn, cql, or bcq"
            )))
        }
    };

    let checkpoint = Checkpoint {
        kind,
        model_cfg: cfg.model,
        train_cfg,
        seed: train_cfg.seed,
        steps: output.steps,
        params: output.params,
        target_params: output.target_params,
        opt_state: output.opt_state,
        behavior,
        norm_stats: set.norm_stats.clone(),
        reward_norms: set.reward_norms,
    };
    save_checkpoint(out, &checkpoint)?;
    write_metrics_csv(&out.with_extension("metrics.csv"), &output.metrics)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), data_hash);
    finish_artifact(
        out,
        "ventlab.checkpoint.v1",
        train_cfg.seed,
        serde_json::json!({
            "model": cfg.model,
            "train": train_cfg,
            "kind": kind,
        }),
        inputs,
    )
}

enum LoadedPolicy {
    Net(Checkpoint),
    /// Behavior-cloning surrogate of the scripted clinician.
    ClinicianSurrogate(ParamVec),
}

impl LoadedPolicy {
    fn id(&self) -> String {
        match self {
            LoadedPolicy::Net(ck) => ck.kind.id().to_string(),
            LoadedPolicy::ClinicianSurrogate(_) => "clinician".to_string(),
        }
    }

    fn window_policy(&self) -> Box<dyn WindowPolicy + Sync + '_> {
        match self {
            LoadedPolicy::Net(ck) => match (&ck.kind, &ck.behavior) {
                (PolicyKind::Bcq { threshold }, Some(behavior)) => Box::new(BcqPolicy {
                    q_params: &ck.params,
                    behavior,
                    threshold: *threshold,
                }),
                _ => Box::new(GreedyQPolicy { params: &ck.params }),
            },
            LoadedPolicy::ClinicianSurrogate(params) => Box::new(GreedyQPolicy { params }),
        }
    }

    /// Q-network for initial-value diagnostics (none for the surrogate,
    /// whose head holds behavior logits rather than values).
    fn value_params(&self) -> Option<&ParamVec> {
        match self {
            LoadedPolicy::Net(ck) => Some(&ck.params),
            LoadedPolicy::ClinicianSurrogate(_) => None,
        }
    }
}

/// Off-policy evaluation report for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqeReport {
    pub policy_id: String,
    pub fqe_score: MeanStd,
    pub per_seed_scores: Vec<f64>,
    pub fqe_seeds: Vec<u64>,
    /// Mean max-Q on in-distribution test-initial windows (policy network).
    pub id_mean_q: Option<f64>,
    /// Mean max-Q on out-of-distribution windows (policy network).
    pub ood_mean_q: Option<f64>,
    /// Maximum achievable episode return absent intermediate rewards.
    pub max_return_threshold: f64,
    pub correlation_r: f64,
    pub correlation_p: f64,
    pub n_test_episodes: usize,
}

fn load_policy(cfg: &RunConfig, selector: &PolicySelector, windows: &WindowSet) -> Result<(LoadedPolicy, Option<String>)> {
    match selector {
        PolicySelector::Checkpoint(path) => {
            let hash = verify_artifact(path)?;
            let ck = load_checkpoint(path)?;
            if ck.model_cfg.window != windows.l {
                return Err(Error::Contract(format!(
                    "checkpoint window {} does not match dataset windows {}",
                    ck.model_cfg.window, windows.l
                )));
            }
            Ok((LoadedPolicy::Net(ck), Some(hash)))
        }
        PolicySelector::Clinician => {
            let (behavior, _) = train_behavior_head(
                windows,
                &cfg.model,
                &cfg.bcq.bc,
                derive_seed(cfg.master_seed, "clinician-bc", &[]),
            )?;
            Ok((LoadedPolicy::ClinicianSurrogate(behavior), None))
        }
    }
}

/// Extracts owned copies of episode-initial windows.
fn initial_window_arrays(ws: &WindowSet) -> Vec<Array2<f64>> {
    ws.initial_indices().into_iter().map(|i| ws.window(i).to_owned()).collect()
}

/// Builds the out-of-distribution evaluation windows per the configured mode.
pub(crate) fn build_ood_windows(
    cfg: &RunConfig,
    id_windows: &[Array2<f64>],
    stats: &crate::data::NormStats,
) -> Result<Vec<Array2<f64>>> {
    let seed = derive_seed(cfg.master_seed, "ood", &[]);
    match cfg.online.ood.to_mode() {
        OodMode::FeatureShift { offset_std } => {
            let base: Vec<Array2<f64>> =
                id_windows.iter().take(cfg.online.ood.count).cloned().collect();
            Ok(ood_windows_feature_shift(&base, offset_std, seed))
        }
        OodMode::ExtendedParams { extension } => {
            let singles = ood_windows_extended_params(
                &cfg.cohort.ranges,
                extension,
                cfg.online.ood.count,
                cfg.dataset.initial_action,
                &cfg.sim,
                stats,
                seed,
            )?;
            Ok(tile_initial_windows(&singles, cfg.model.window))
        }
    }
}

/// Fits FQE on the training split and scores the policy on held-out initial
/// windows; also runs the initial-Q OOD diagnostic and the return/mortality
/// correlation.
pub fn eval_fqe_cmd(
    cfg: &RunConfig,
    data_path: &Path,
    policy: &PolicySelector,
    out: &Path,
) -> Result<FqeReport> {
    cfg.validate()?;
    let data_hash = verify_artifact(data_path)?;
    let (set, _) = load_episode_set(data_path)?;
    let train_ws = train_windows(&set, cfg.model.window)?;
    let test_ws = test_windows(&set, cfg.model.window)?;
    let (policy, policy_hash) = load_policy(cfg, policy, &train_ws)?;
    let window_policy = policy.window_policy();

    let test_initial = test_ws.initial_indices();
    let fqe_seeds: Vec<u64> = (0..cfg.fqe.n_seeds as u64)
        .map(|i| derive_seed(cfg.master_seed, "fqe", &[i]))
        .collect();
    let mut scores = Vec::with_capacity(fqe_seeds.len());
    let mut first_values: Option<Vec<f64>> = None;
    for seed in &fqe_seeds {
        let mut fqe_cfg = cfg.fqe.fit;
        fqe_cfg.seed = *seed;
        fqe_cfg.gamma = cfg.train.gamma;
        let model = fit_fqe(window_policy.as_ref(), &train_ws, &cfg.model, &fqe_cfg)?;
        let (mean, values) = fqe_score(&model, window_policy.as_ref(), &test_ws, &test_initial)?;
        scores.push(mean);
        if first_values.is_none() {
            first_values = Some(fqe_values(&model, window_policy.as_ref(), &test_ws, &test_initial)?);
            debug_assert_eq!(first_values.as_deref().unwrap(), values.as_slice());
        }
    }

    // Per-episode expected return vs severity-derived mortality at episode end.
    let test_eps = set.test_episodes();
    let mortality: Vec<f64> = test_eps
        .iter()
        .map(|ep| predicted_mortality((*ep.apaches.last().unwrap()).round() as u8))
        .collect();
    let returns = first_values.expect("at least one FQE seed");
    if returns.len() != mortality.len() {
        return Err(Error::Contract(
            "per-episode returns and mortality arrays are misaligned".into(),
        ));
    }
    let (r, p) = return_mortality_correlation(&returns, &mortality)?;

    // Initial-Q diagnostics on the policy's own value network.
    let id_arrays = initial_window_arrays(&test_ws);
    let (id_mean_q, ood_mean_q) = match policy.value_params() {
        Some(params) => {
            let ood = build_ood_windows(cfg, &id_arrays, &set.norm_stats)?;
            (Some(ood_initial_q(params, &id_arrays)?), Some(ood_initial_q(params, &ood)?))
        }
        None => (None, None),
    };

    let report = FqeReport {
        policy_id: policy.id(),
        fqe_score: crate::online::mean_std(&scores),
        per_seed_scores: scores,
        fqe_seeds,
        id_mean_q,
        ood_mean_q,
        max_return_threshold: 1.0,
        correlation_r: r,
        correlation_p: p,
        n_test_episodes: mortality.len(),
    };
    fs::write(out, serde_json::to_vec_pretty(&report)?)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), data_hash);
    if let Some(h) = policy_hash {
        inputs.insert("policy".to_string(), h);
    }
    finish_artifact(
        out,
        "ventlab.fqe-report.v1",
        cfg.master_seed,
        serde_json::json!({ "fqe": cfg.fqe, "ood": cfg.online.ood }),
        inputs,
    )?;
    Ok(report)
}

/// Closed-loop evaluation of one policy on the twin cohort.
pub fn eval_online_cmd(
    cfg: &RunConfig,
    cohort_path: &Path,
    data_path: &Path,
    policy: &PolicySelector,
    out: &Path,
) -> Result<OnlineReport> {
    cfg.validate()?;
    let cohort_hash = verify_artifact(cohort_path)?;
    let data_hash = verify_artifact(data_path)?;
    let cohort = load_cohort(cohort_path)?;
    let (set, _) = load_episode_set(data_path)?;
    let rollout_cfg = RolloutConfig::from_dataset(
        &cfg.dataset,
        &cfg.sim,
        &set.reward_norms,
        &set.norm_stats,
        cfg.model.window,
    );
    let seeds: Vec<u64> = (0..cfg.online.n_seeds as u64)
        .map(|i| derive_seed(cfg.master_seed, "online", &[i]))
        .collect();

    let (report, policy_hash) = match policy {
        PolicySelector::Clinician => {
            let report = evaluate_policy_online(
                &RolloutPolicy::Clinician,
                "clinician",
                &cohort.twins,
                &rollout_cfg,
                &seeds,
            )?;
            (report, None)
        }
        PolicySelector::Checkpoint(path) => {
            let hash = verify_artifact(path)?;
            let ck = load_checkpoint(path)?;
            if ck.model_cfg.window != cfg.model.window {
                return Err(Error::Contract(
                    "checkpoint window length does not match the run config".into(),
                ));
            }
            let report = match (&ck.kind, &ck.behavior) {
                (PolicyKind::Bcq { threshold }, Some(behavior)) => {
                    let wp = BcqPolicy { q_params: &ck.params, behavior, threshold: *threshold };
                    evaluate_policy_online(
                        &RolloutPolicy::Window(&wp),
                        ck.kind.id(),
                        &cohort.twins,
                        &rollout_cfg,
                        &seeds,
                    )?
                }
                _ => {
                    let wp = GreedyQPolicy { params: &ck.params };
                    evaluate_policy_online(
                        &RolloutPolicy::Window(&wp),
                        ck.kind.id(),
                        &cohort.twins,
                        &rollout_cfg,
                        &seeds,
                    )?
                }
            };
            (report, Some(hash))
        }
    };
    fs::write(out, serde_json::to_vec_pretty(&report)?)?;
    write_action_histogram_csv(&out.with_extension("actions.csv"), &report.action_histogram)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("cohort".to_string(), cohort_hash);
    inputs.insert("data".to_string(), data_hash);
    if let Some(h) = policy_hash {
        inputs.insert("policy".to_string(), h);
    }
    finish_artifact(
        out,
        "ventlab.online-report.v1",
        cfg.master_seed,
        serde_json::json!({ "online": cfg.online, "horizon": cfg.dataset.horizon }),
        inputs,
    )?;
    Ok(report)
}

/// Sequentially runs the whole pipeline into one output directory.
pub fn run_all_cmd(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let cohort = out_dir.join("cohort.json");
    let data = out_dir.join("episodes.ldjson");
    spawn_cohort_cmd(cfg, &cohort)?;
    gen_data_cmd(cfg, &cohort, &data)?;

    let policies: [(Option<&str>, &str); 4] = [
        (None, "tcql"),
        (Some("ddqn"), "ddqn"),
        (Some("cql"), "cql_fixed"),
        (Some("bcq"), "bcq"),
    ];
    let mut fqe_reports = Vec::new();
    let mut online_reports = Vec::new();
    for (baseline, name) in policies {
        let ck = out_dir.join(format!("{name}.ckpt"));
        train_cmd(cfg, &data, &ck, baseline, None)?;
        let fqe_out = out_dir.join(format!("fqe_{name}.json"));
        eval_fqe_cmd(cfg, &data, &PolicySelector::Checkpoint(ck.clone()), &fqe_out)?;
        fqe_reports.push(fqe_out);
        let online_out = out_dir.join(format!("online_{name}.json"));
        eval_online_cmd(cfg, &cohort, &data, &PolicySelector::Checkpoint(ck), &online_out)?;
        online_reports.push(online_out);
    }
    let fqe_out = out_dir.join("fqe_clinician.json");
    eval_fqe_cmd(cfg, &data, &PolicySelector::Clinician, &fqe_out)?;
    fqe_reports.push(fqe_out);
    let online_out = out_dir.join("online_clinician.json");
    eval_online_cmd(cfg, &cohort, &data, &PolicySelector::Clinician, &online_out)?;
    online_reports.push(online_out);

    crate::pipeline::report::report_cmd(&fqe_reports, &online_reports, &out_dir.join("report.csv"))
}
