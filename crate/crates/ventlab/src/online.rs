//! Closed-loop policy evaluation on the digital-twin cohort: rollouts,
//! safety-compliance metrics, out-of-distribution window construction, and
//! per-dimension action histograms.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apache2_score, compute_reward, decode_action, predicted_mortality, ActionBins, ActionIndex,
    DatasetConfig, MortalityModel, NormStats, PatientState, RewardNorms, ScriptedClinician,
    N_FIO2, N_IE, N_PEEP, N_PVENT, N_RR, N_STATE_CHANNELS,
};
use crate::error::{Error, Result};
use crate::policy::WindowPolicy;
use crate::rng::{derive_seed, rng_from};
use crate::sim::{
    initial_twin_state, step_twin, CohortRanges, MechanicsObservation, SimConfig, TwinParams,
};

/// Safety predicates for one ventilated step: oxygenation and CO2 clearance
/// read from the post-step state, peak pressure from the applied mechanics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyFlags {
    /// PaO2 strictly above 60 mmHg.
    pub pao2_ok: bool,
    /// PaCO2 strictly below 60 mmHg.
    pub paco2_ok: bool,
    /// PIP at most 35 cmH2O.
    pub pip_ok: bool,
}

impl SafetyFlags {
    pub fn evaluate(next_state: &PatientState, mech: &MechanicsObservation) -> Self {
        SafetyFlags {
            pao2_ok: next_state.pao2 > 60.0,
            paco2_ok: next_state.paco2 < 60.0,
            pip_ok: mech.pip_cmh2o <= 35.0,
        }
    }

    pub fn all(&self) -> bool {
        self.pao2_ok && self.paco2_ok && self.pip_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub state: PatientState,
    pub action: ActionIndex,
    pub mech: MechanicsObservation,
    pub reward: f64,
    pub next_state: PatientState,
    pub flags: SafetyFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub twin_id: u32,
    pub seed: u64,
    pub steps: Vec<RolloutStep>,
    pub cumulative_reward: f64,
    pub survived: bool,
    /// Probability of death under the outcome model at episode end.
    pub p_death: f64,
    /// Severity-score mortality surrogate at episode end.
    pub apache_mortality_final: f64,
    pub final_injury: f64,
}

/// Everything a rollout needs besides the policy and the twin.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub window_len: usize,
    pub initial_action: [usize; 5],
    pub mortality: MortalityModel,
    pub reward_norms: RewardNorms,
    pub norm_stats: NormStats,
    pub sim: SimConfig,
    /// Exploration rate when the rollout policy is the scripted clinician.
    pub clinician_eps: f64,
}

impl RolloutConfig {
    pub fn from_dataset(
        cfg: &DatasetConfig,
        sim: &SimConfig,
        norms: &RewardNorms,
        stats: &NormStats,
        window_len: usize,
    ) -> Self {
        RolloutConfig {
            horizon: cfg.horizon,
            window_len,
            initial_action: cfg.initial_action,
            mortality: cfg.mortality,
            reward_norms: *norms,
            norm_stats: stats.clone(),
            sim: *sim,
            clinician_eps: cfg.eps,
        }
    }
}

/// What drives action selection during a rollout.
pub enum RolloutPolicy<'a> {
    /// A trained network policy over normalized windows.
    Window(&'a (dyn WindowPolicy + Sync)),
    /// The scripted behavior policy (reference row).
    Clinician,
}

fn assemble_window(history: &[[f64; N_STATE_CHANNELS]], l: usize) -> Array2<f64> {
    let t = history.len() - 1;
    Array2::from_shape_fn((l, N_STATE_CHANNELS), |(j, c)| {
        let src = (t + j + 1).saturating_sub(l);
        history[src][c]
    })
}

/// Rolls one policy on one twin for `horizon` steps. Deterministic per seed.
pub fn rollout(
    policy: &RolloutPolicy,
    twin_id: u32,
    params: &TwinParams,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<RolloutRecord> {
    let [p, f, r, i, v] = cfg.initial_action;
    let initial_bins = ActionBins::new(p, f, r, i, v)?;
    let init_action = initial_bins.action();
    let mut twin = initial_twin_state(params, &init_action, &cfg.sim)?;
    let mut clinician = ScriptedClinician::new(initial_bins, cfg.clinician_eps);
    let mut clin_rng = rng_from(derive_seed(seed, "policy", &[]));

    let mut states = vec![PatientState::observe(&twin)];
    let mut history = vec![cfg.norm_stats.normalize(&states[0])];
    let mut fio2s = vec![init_action.fio2];
    let mut actions = Vec::with_capacity(cfg.horizon);
    let mut mechs: Vec<MechanicsObservation> = Vec::with_capacity(cfg.horizon);

    for t in 0..cfg.horizon {
        let action_index = match policy {
            RolloutPolicy::Window(p) => {
                let window = assemble_window(&history, cfg.window_len);
                p.select(window.view())?
            }
            RolloutPolicy::Clinician => {
                clinician.decide(states.last().unwrap(), mechs.last(), &mut clin_rng)
            }
        };
        let action = decode_action(action_index)?;
        let (next_twin, mech) =
            step_twin(&twin, &action, derive_seed(seed, "step", &[t as u64]), &cfg.sim)?;
        let next_state = PatientState::observe(&next_twin);
        history.push(cfg.norm_stats.normalize(&next_state));
        states.push(next_state);
        fio2s.push(action.fio2);
        actions.push(action_index);
        mechs.push(mech);
        twin = next_twin;
    }

    let apache_final = f64::from(apache2_score(states.last().unwrap(), *fio2s.last().unwrap()));
    let p_death = cfg.mortality.p_death(apache_final, twin.injury_level);
    let survived = rng_from(derive_seed(seed, "outcome", &[])).gen::<f64>() >= p_death;

    let h = cfg.horizon;
    let mut steps = Vec::with_capacity(h);
    let mut cumulative = 0.0;
    for t in 0..h {
        let terminal = t == h - 1;
        let reward = compute_reward(
            &states[t],
            &states[t + 1],
            &mechs[t],
            &mechs[(t + 1).min(h - 1)],
            fio2s[t],
            fio2s[t + 1],
            terminal,
            terminal.then_some(survived),
            &cfg.reward_norms,
        )?;
        cumulative += reward;
        steps.push(RolloutStep {
            state: states[t],
            action: actions[t],
            mech: mechs[t],
            reward,
            next_state: states[t + 1],
            flags: SafetyFlags::evaluate(&states[t + 1], &mechs[t]),
        });
    }
    debug_assert!(cumulative.abs() <= 1.0 + (h as f64 - 1.0) + 1e-9);
    Ok(RolloutRecord {
        twin_id,
        seed,
        steps,
        cumulative_reward: cumulative,
        survived,
        p_death,
        apache_mortality_final: predicted_mortality(apache_final.round() as u8),
        final_injury: twin.injury_level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceMetrics {
    pub safety_rate_pct: f64,
    pub reduced_dp_rate_pct: f64,
}

/// Step-level compliance rates over a set of rollout records.
pub fn compliance_metrics(records: &[RolloutRecord]) -> Result<ComplianceMetrics> {
    let total: usize = records.iter().map(|r| r.steps.len()).sum();
    if total == 0 {
        return Err(Error::Data("no rollout steps to score".into()));
    }
    let mut safe = 0usize;
    let mut reduced = 0usize;
    for rec in records {
        let initial_dp = rec.steps[0].mech.driving_pressure_cmh2o;
        for step in &rec.steps {
            if step.flags.all() {
                safe += 1;
            }
            if step.mech.driving_pressure_cmh2o < initial_dp {
                reduced += 1;
            }
        }
    }
    Ok(ComplianceMetrics {
        safety_rate_pct: 100.0 * safe as f64 / total as f64,
        reduced_dp_rate_pct: 100.0 * reduced as f64 / total as f64,
    })
}

/// How out-of-distribution evaluation windows are constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OodMode {
    /// Twins drawn from parameter ranges widened beyond the training bounds.
    ExtendedParams { extension: f64 },
    /// Held-out windows with +k-sigma offsets on a random channel subset.
    FeatureShift { offset_std: f64 },
}

/// Initial windows of twins sampled from extended parameter ranges.
pub fn ood_windows_extended_params(
    ranges: &CohortRanges,
    extension: f64,
    n: usize,
    initial_action: [usize; 5],
    sim: &SimConfig,
    stats: &NormStats,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    let extended = ranges.extended(extension);
    let cohort = crate::sim::spawn_cohort(n, seed, &extended)?;
    let [p, f, r, i, v] = initial_action;
    let init_action = ActionBins::new(p, f, r, i, v)?.action();
    let mut out = Vec::with_capacity(n);
    for params in &cohort {
        let twin = initial_twin_state(params, &init_action, sim)?;
        let s = stats.normalize(&PatientState::observe(&twin));
        out.push(Array2::from_shape_fn((1, N_STATE_CHANNELS), |(_, c)| s[c]));
    }
    Ok(out)
}

/// Copies of held-out windows with +offset_std z-score shifts applied to a
/// random 4-8 channel subset of every row.
pub fn ood_windows_feature_shift(
    windows: &[Array2<f64>],
    offset_std: f64,
    seed: u64,
) -> Vec<Array2<f64>> {
    let mut rng = rng_from(derive_seed(seed, "feature-shift", &[]));
    windows
        .iter()
        .map(|w| {
            let mut shifted = w.clone();
            let k = rng.gen_range(4..=8usize);
            let mut channels: Vec<usize> = (0..N_STATE_CHANNELS).collect();
            channels.shuffle(&mut rng);
            for c in channels.into_iter().take(k) {
                for j in 0..shifted.dim().0 {
                    shifted[[j, c]] += offset_std;
                }
            }
            shifted
        })
        .collect()
}

/// Repeats each single-row initial state into an L-row window.
pub fn tile_initial_windows(windows: &[Array2<f64>], l: usize) -> Vec<Array2<f64>> {
    windows
        .iter()
        .map(|w| Array2::from_shape_fn((l, w.dim().1), |(_, c)| w[[0, c]]))
        .collect()
}

/// Per-dimension histograms (percent per bin) of a stream of actions.
pub fn action_distribution(actions: &[ActionIndex]) -> Result<[Vec<f64>; 5]> {
    let mut hist = [
        vec![0.0; N_PEEP],
        vec![0.0; N_FIO2],
        vec![0.0; N_RR],
        vec![0.0; N_IE],
        vec![0.0; N_PVENT],
    ];
    if actions.is_empty() {
        return Ok(hist);
    }
    for a in actions {
        let b = ActionBins::decode(*a)?;
        hist[0][b.peep] += 1.0;
        hist[1][b.fio2] += 1.0;
        hist[2][b.rr] += 1.0;
        hist[3][b.ie] += 1.0;
        hist[4][b.pvent] += 1.0;
    }
    let n = actions.len() as f64;
    for dim in hist.iter_mut() {
        for v in dim.iter_mut() {
            *v *= 100.0 / n;
        }
    }
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seed: u64,
    pub safety_rate_pct: f64,
    pub reduced_dp_rate_pct: f64,
    pub mean_cumulative_reward: f64,
    pub mean_p_death: f64,
    pub mean_apache_mortality: f64,
    pub survival_rate_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Closed-loop evaluation summary across rollout seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    pub policy_id: String,
    pub n_twins: usize,
    pub per_seed: Vec<SeedAggregate>,
    pub safety_rate_pct: MeanStd,
    pub reduced_dp_rate_pct: MeanStd,
    pub cumulative_reward: MeanStd,
    pub p_death: MeanStd,
    pub apache_mortality: MeanStd,
    pub survival_rate_pct: MeanStd,
    /// Pooled per-dimension action percentages (PEEP, FiO2, RR, I:E, Pvent).
    pub action_histogram: Vec<Vec<f64>>,
}

/// Rolls the policy on every twin once per seed and aggregates.
pub fn evaluate_policy_online(
    policy: &RolloutPolicy,
    policy_id: &str,
    cohort: &[TwinParams],
    cfg: &RolloutConfig,
    seeds: &[u64],
) -> Result<OnlineReport> {
    if cohort.is_empty() || seeds.is_empty() {
        return Err(Error::Data("online evaluation needs twins and seeds".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut all_actions: Vec<ActionIndex> = Vec::new();
    for (si, seed) in seeds.iter().enumerate() {
        let records: Vec<RolloutRecord> = cohort
            .par_iter()
            .enumerate()
            .map(|(twin_id, params)| {
                rollout(
                    policy,
                    twin_id as u32,
                    params,
                    cfg,
                    derive_seed(*seed, "rollout", &[si as u64, twin_id as u64]),
                )
            })
            .collect::<Result<_>>()?;
        let cm = compliance_metrics(&records)?;
        let n = records.len() as f64;
        per_seed.push(SeedAggregate {
            seed: *seed,
            safety_rate_pct: cm.safety_rate_pct,
            reduced_dp_rate_pct: cm.reduced_dp_rate_pct,
            mean_cumulative_reward: records.iter().map(|r| r.cumulative_reward).sum::<f64>() / n,
            mean_p_death: records.iter().map(|r| r.p_death).sum::<f64>() / n,
            mean_apache_mortality: records.iter().map(|r| r.apache_mortality_final).sum::<f64>()
                / n,
            survival_rate_pct: 100.0 * records.iter().filter(|r| r.survived).count() as f64 / n,
        });
        for rec in &records {
            all_actions.extend(rec.steps.iter().map(|s| s.action));
        }
    }
    let hist = action_distribution(&all_actions)?;
    let collect = |f: fn(&SeedAggregate) -> f64| -> MeanStd {
        mean_std(&per_seed.iter().map(f).collect::<Vec<f64>>())
    };
    Ok(OnlineReport {
        policy_id: policy_id.to_string(),
        n_twins: cohort.len(),
        per_seed: per_seed.clone(),
        safety_rate_pct: collect(|s| s.safety_rate_pct),
        reduced_dp_rate_pct: collect(|s| s.reduced_dp_rate_pct),
        cumulative_reward: collect(|s| s.mean_cumulative_reward),
        p_death: collect(|s| s.mean_p_death),
        apache_mortality: collect(|s| s.mean_apache_mortality),
        survival_rate_pct: collect(|s| s.survival_rate_pct),
        action_histogram: hist.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ConstantPolicy;
    use crate::sim::test_support::reference_params;
    use crate::sim::{spawn_cohort, CohortRanges};

    fn test_cfg() -> RolloutConfig {
        RolloutConfig {
            horizon: 8,
            window_len: 3,
            initial_action: [0, 1, 2, 2, 3],
            mortality: MortalityModel::default(),
            reward_norms: RewardNorms { apache_max: 40.0, dp_max: 25.0 },
            norm_stats: NormStats {
                mean: vec![0.0; N_STATE_CHANNELS],
                std: vec![1.0; N_STATE_CHANNELS],
            },
            sim: SimConfig::default(),
            clinician_eps: 0.1,
        }
    }

    #[test]
    fn benign_policy_on_a_healthy_twin_is_fully_compliant() {
        // Moderate settings: PEEP 8, FiO2 0.45, RR 14, 1:2, Pvent 12 (PIP 20).
        let benign = ConstantPolicy(ActionBins::new(1, 2, 2, 2, 3).unwrap().encode().unwrap());
        let rec = rollout(
            &RolloutPolicy::Window(&benign),
            0,
            &reference_params(),
            &test_cfg(),
            7,
        )
        .unwrap();
        for step in &rec.steps {
            assert!(step.flags.all(), "flags {:?}", step.flags);
        }
        let cm = compliance_metrics(&[rec]).unwrap();
        assert_eq!(cm.safety_rate_pct, 100.0);
    }

    #[test]
    fn max_pressure_policy_violates_the_pip_flag() {
        // PEEP 18 + Pvent 25 -> PIP 43 > 35 on every step.
        let harsh = ConstantPolicy(ActionBins::new(5, 7, 6, 2, 7).unwrap().encode().unwrap());
        let rec = rollout(
            &RolloutPolicy::Window(&harsh),
            0,
            &reference_params(),
            &test_cfg(),
            7,
        )
        .unwrap();
        for step in &rec.steps {
            assert!(!step.flags.pip_ok);
        }
    }

    #[test]
    fn rollouts_are_deterministic_per_seed() {
        let benign = ConstantPolicy(ActionBins::new(1, 2, 2, 2, 3).unwrap().encode().unwrap());
        let p = RolloutPolicy::Window(&benign);
        let a = rollout(&p, 0, &reference_params(), &test_cfg(), 11).unwrap();
        let b = rollout(&p, 0, &reference_params(), &test_cfg(), 11).unwrap();
        assert_eq!(a, b);
        let c = rollout(&RolloutPolicy::Clinician, 0, &reference_params(), &test_cfg(), 11)
            .unwrap();
        let d = rollout(&RolloutPolicy::Clinician, 0, &reference_params(), &test_cfg(), 11)
            .unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn constant_dp_means_zero_reduced_dp_rate() {
        let benign = ConstantPolicy(ActionBins::new(1, 2, 2, 2, 3).unwrap().encode().unwrap());
        let rec = rollout(
            &RolloutPolicy::Window(&benign),
            0,
            &reference_params(),
            &test_cfg(),
            3,
        )
        .unwrap();
        let cm = compliance_metrics(&[rec]).unwrap();
        assert_eq!(cm.reduced_dp_rate_pct, 0.0);
    }

    #[test]
    fn hand_built_flags_give_expected_safety_rate() {
        let benign = ConstantPolicy(ActionBins::new(1, 2, 2, 2, 3).unwrap().encode().unwrap());
        let mut rec = rollout(
            &RolloutPolicy::Window(&benign),
            0,
            &reference_params(),
            &test_cfg(),
            5,
        )
        .unwrap();
        rec.steps.truncate(4);
        rec.steps[2].flags.pao2_ok = false;
        let cm = compliance_metrics(&[rec]).unwrap();
        assert_eq!(cm.safety_rate_pct, 75.0);
    }

    #[test]
    fn action_histogram_sums_to_100_per_dimension() {
        let actions: Vec<ActionIndex> =
            (0..500).map(|i| ActionIndex::new((i * 27) % 13_440).unwrap()).collect();
        let hist = action_distribution(&actions).unwrap();
        for dim in &hist {
            let sum: f64 = dim.iter().sum();
            assert!((sum - 100.0).abs() < 1e-9);
        }
        let constant = vec![ActionIndex::new(42).unwrap(); 10];
        let hist = action_distribution(&constant).unwrap();
        for dim in &hist {
            assert!(dim.iter().any(|v| *v == 100.0));
        }
    }

    #[test]
    fn feature_shift_zero_offset_is_identity_and_tiling_repeats_rows() {
        let w = Array2::from_shape_fn((1, N_STATE_CHANNELS), |(_, c)| c as f64);
        let shifted = ood_windows_feature_shift(&[w.clone()], 0.0, 3);
        assert_eq!(shifted[0], w);
        let tiled = tile_initial_windows(&[w], 4);
        assert_eq!(tiled[0].dim(), (4, N_STATE_CHANNELS));
        for j in 0..4 {
            assert_eq!(tiled[0][[j, 5]], 5.0);
        }
    }

    #[test]
    fn extended_param_windows_are_reproducible_and_finite() {
        let stats = NormStats {
            mean: vec![0.0; N_STATE_CHANNELS],
            std: vec![1.0; N_STATE_CHANNELS],
        };
        let a = ood_windows_extended_params(
            &CohortRanges::default(),
            0.2,
            10,
            [0, 1, 2, 2, 3],
            &SimConfig::default(),
            &stats,
            5,
        )
        .unwrap();
        let b = ood_windows_extended_params(
            &CohortRanges::default(),
            0.2,
            10,
            [0, 1, 2, 2, 3],
            &SimConfig::default(),
            &stats,
            5,
        )
        .unwrap();
        assert_eq!(a.len(), 10);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
            assert!(x.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn online_report_covers_every_seed_with_clinician_reference() {
        let cohort = spawn_cohort(4, 9, &CohortRanges::default()).unwrap();
        let report = evaluate_policy_online(
            &RolloutPolicy::Clinician,
            "clinician",
            &cohort,
            &test_cfg(),
            &[1, 2, 3],
        )
        .unwrap();
        assert_eq!(report.per_seed.len(), 3);
        assert!(report.safety_rate_pct.mean >= 0.0 && report.safety_rate_pct.mean <= 100.0);
        assert_eq!(report.action_histogram.len(), 5);
    }
}
