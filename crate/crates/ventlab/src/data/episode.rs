//! Episode generation: rolls the scripted clinician on every twin, samples
//! terminal survival, and attaches rewards using training-split normalizers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::action::{decode_action, ActionBins, ActionIndex};
use crate::data::apache::apache2_score;
use crate::data::clinician::ScriptedClinician;
use crate::data::reward::{compute_reward, RewardNorms};
use crate::data::state::PatientState;
use crate::data::window::{split_dataset, NormStats};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::sim::{initial_twin_state, step_twin, MechanicsObservation, SimConfig, TwinParams};
use rand::Rng;

/// Logistic model used to sample the terminal 90-day outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MortalityModel {
    pub intercept: f64,
    pub apache_coef: f64,
    pub injury_coef: f64,
}

impl Default for MortalityModel {
    fn default() -> Self {
        MortalityModel {
            intercept: -3.517,
            apache_coef: 0.146,
            // Calibrated so the scripted-clinician cohort's mean predicted
            // mortality sits near 0.27 on the default ranges.
            injury_coef: 0.3,
        }
    }
}

impl MortalityModel {
    pub fn p_death(&self, apache_final: f64, injury_final: f64) -> f64 {
        let logit = self.intercept + self.apache_coef * apache_final + self.injury_coef * injury_final;
        1.0 / (1.0 + (-logit).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub episodes_per_twin: usize,
    pub horizon: usize,
    pub eps: f64,
    /// Bin indices of the settings every twin is ventilated with before the
    /// episode starts (PEEP, FiO2, RR, I:E, Pvent).
    pub initial_action: [usize; 5],
    pub split_ratio: f64,
    pub mortality: MortalityModel,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            episodes_per_twin: 5,
            horizon: 24,
            eps: 0.15,
            initial_action: [0, 1, 2, 2, 3], // PEEP 5, FiO2 0.40, RR 14, 1:2, Pvent 12
            split_ratio: 0.8,
            mortality: MortalityModel::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_twin == 0 || self.horizon == 0 {
            return Err(Error::Config("episodes per twin and horizon must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::Config(format!("eps {} must be in [0, 1]", self.eps)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio {} must be in (0, 1)",
                self.split_ratio
            )));
        }
        self.initial_bins().map(|_| ())
    }

    pub fn initial_bins(&self) -> Result<ActionBins> {
        let [p, f, r, i, v] = self.initial_action;
        ActionBins::new(p, f, r, i, v)
    }
}

/// One generated episode; rewards are attached after the split is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: u32,
    pub twin_id: u32,
    /// Observed states s_0 .. s_H.
    pub states: Vec<PatientState>,
    /// Actions a_0 .. a_{H-1}.
    pub actions: Vec<ActionIndex>,
    /// Mechanics of each applied action.
    pub mechs: Vec<MechanicsObservation>,
    /// FiO2 in effect when each state was observed.
    pub fio2_in_effect: Vec<f64>,
    /// APACHE-II of each state.
    pub apaches: Vec<f64>,
    /// Rewards r_0 .. r_{H-1}; empty until `attach_rewards`.
    pub rewards: Vec<f64>,
    pub survived: bool,
    pub p_death: f64,
    pub final_injury: f64,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn transition(&self, t: usize) -> Transition {
        let terminal = t == self.len() - 1;
        Transition {
            episode_id: self.episode_id,
            step_index: t as u32,
            state: self.states[t],
            mech: self.mechs[t],
            action_index: self.actions[t],
            reward: self.rewards.get(t).copied().unwrap_or(f64::NAN),
            next_state: self.states[t + 1],
            terminal,
            survived: terminal.then_some(self.survived),
        }
    }
}

/// Flat dataset record, one per decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub episode_id: u32,
    pub step_index: u32,
    pub state: PatientState,
    pub mech: MechanicsObservation,
    pub action_index: ActionIndex,
    pub reward: f64,
    pub next_state: PatientState,
    pub terminal: bool,
    pub survived: Option<bool>,
}

/// Episodes plus everything needed to reproduce and normalize them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSet {
    pub episodes: Vec<Episode>,
    pub train_ids: Vec<u32>,
    pub test_ids: Vec<u32>,
    pub reward_norms: RewardNorms,
    pub norm_stats: NormStats,
    pub config: DatasetConfig,
    pub seed: u64,
}

impl EpisodeSet {
    pub fn train_episodes(&self) -> Vec<&Episode> {
        self.train_ids.iter().map(|id| &self.episodes[*id as usize]).collect()
    }

    pub fn test_episodes(&self) -> Vec<&Episode> {
        self.test_ids.iter().map(|id| &self.episodes[*id as usize]).collect()
    }

    pub fn n_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

fn roll_episode(
    twin_id: u32,
    episode_id: u32,
    params: &TwinParams,
    cfg: &DatasetConfig,
    sim_cfg: &SimConfig,
    ep_seed: u64,
) -> Result<Episode> {
    let initial_bins = cfg.initial_bins()?;
    let init_action = initial_bins.action();
    let mut twin = initial_twin_state(params, &init_action, sim_cfg)?;
    let mut clinician = ScriptedClinician::new(initial_bins, cfg.eps);
    let mut policy_rng = rng_from(derive_seed(ep_seed, "policy", &[]));

    let mut states = Vec::with_capacity(cfg.horizon + 1);
    let mut actions = Vec::with_capacity(cfg.horizon);
    let mut mechs: Vec<MechanicsObservation> = Vec::with_capacity(cfg.horizon);
    let mut fio2s = Vec::with_capacity(cfg.horizon + 1);

    states.push(PatientState::observe(&twin));
    fio2s.push(init_action.fio2);
    for t in 0..cfg.horizon {
        let state = *states.last().expect("at least the initial state");
        let action_index = clinician.decide(&state, mechs.last(), &mut policy_rng);
        let action = decode_action(action_index)?;
        let step_seed = derive_seed(ep_seed, "step", &[t as u64]);
        let (next_twin, mech) = step_twin(&twin, &action, step_seed, sim_cfg)?;
        states.push(PatientState::observe(&next_twin));
        fio2s.push(action.fio2);
        actions.push(action_index);
        mechs.push(mech);
        twin = next_twin;
    }
    let apaches: Vec<f64> = states
        .iter()
        .zip(&fio2s)
        .map(|(s, f)| f64::from(apache2_score(s, *f)))
        .collect();
    let p_death = cfg.mortality.p_death(*apaches.last().unwrap(), twin.injury_level);
    let mut outcome_rng = rng_from(derive_seed(ep_seed, "outcome", &[]));
    let survived = outcome_rng.gen::<f64>() >= p_death;
    Ok(Episode {
        episode_id,
        twin_id,
        states,
        actions,
        mechs,
        fio2_in_effect: fio2s,
        apaches,
        rewards: Vec::new(),
        survived,
        p_death,
        final_injury: twin.injury_level,
    })
}

/// Rolls every (twin, episode) pair in parallel; order and content are
/// deterministic in `seed`.
pub fn generate_episodes(
    cohort: &[TwinParams],
    cfg: &DatasetConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<Vec<Episode>> {
    cfg.validate()?;
    if cohort.is_empty() {
        return Err(Error::Data("cohort is empty".into()));
    }
    let jobs: Vec<(u32, u32)> = (0..cohort.len() as u32)
        .flat_map(|k| (0..cfg.episodes_per_twin as u32).map(move |e| (k, e)))
        .collect();
    jobs.par_iter()
        .map(|(twin_id, e)| {
            let episode_id = twin_id * cfg.episodes_per_twin as u32 + e;
            let ep_seed = derive_seed(seed, "episode", &[u64::from(*twin_id), u64::from(*e)]);
            roll_episode(*twin_id, episode_id, &cohort[*twin_id as usize], cfg, sim_cfg, ep_seed)
        })
        .collect()
}

/// Computes training-split reward normalizers and writes rewards into every
/// episode (both splits use the training norms).
pub fn attach_rewards(episodes: &mut [Episode], train_ids: &[u32]) -> Result<RewardNorms> {
    let mut apache_max = 0.0f64;
    let mut dp_max = 0.0f64;
    for id in train_ids {
        let ep = &episodes[*id as usize];
        for a in &ep.apaches {
            apache_max = apache_max.max(*a);
        }
        for m in &ep.mechs {
            dp_max = dp_max.max(m.driving_pressure_cmh2o);
        }
    }
    let norms = RewardNorms {
        apache_max: apache_max.max(1.0),
        dp_max: dp_max.max(1.0),
    };
    for ep in episodes.iter_mut() {
        let h = ep.len();
        let mut rewards = Vec::with_capacity(h);
        for t in 0..h {
            let terminal = t == h - 1;
            let r = compute_reward(
                &ep.states[t],
                &ep.states[t + 1],
                &ep.mechs[t],
                &ep.mechs[(t + 1).min(h - 1)],
                ep.fio2_in_effect[t],
                ep.fio2_in_effect[t + 1],
                terminal,
                terminal.then_some(ep.survived),
                &norms,
            )?;
            rewards.push(r);
        }
        ep.rewards = rewards;
    }
    Ok(norms)
}

/// Full dataset build: episodes, split, reward norms, normalization stats.
pub fn generate_dataset(
    cohort: &[TwinParams],
    cfg: &DatasetConfig,
    sim_cfg: &SimConfig,
    seed: u64,
) -> Result<EpisodeSet> {
    let mut episodes = generate_episodes(cohort, cfg, sim_cfg, seed)?;
    let (train_ids, test_ids) = split_dataset(
        episodes.len(),
        cfg.split_ratio,
        derive_seed(seed, "split", &[]),
    )?;
    let reward_norms = attach_rewards(&mut episodes, &train_ids)?;
    let train_refs: Vec<&Episode> = train_ids.iter().map(|id| &episodes[*id as usize]).collect();
    let norm_stats = NormStats::from_episodes(&train_refs)?;
    Ok(EpisodeSet {
        episodes,
        train_ids,
        test_ids,
        reward_norms,
        norm_stats,
        config: cfg.clone(),
        seed,
    })
}
