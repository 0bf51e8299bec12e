//! Sequence windows, the episode-level split, and normalization statistics.

use ndarray::{Array3, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::action::ActionIndex;
use crate::data::episode::Episode;
use crate::data::state::{PatientState, N_STATE_CHANNELS};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Per-channel z-scoring statistics, computed on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn from_episodes(episodes: &[&Episode]) -> Result<Self> {
        let mut count = 0usize;
        let mut mean = vec![0.0; N_STATE_CHANNELS];
        let mut m2 = vec![0.0; N_STATE_CHANNELS];
        for ep in episodes {
            for s in &ep.states {
                count += 1;
                let arr = s.to_array();
                // Welford, per channel.
                for (c, x) in arr.iter().enumerate() {
                    let delta = x - mean[c];
                    mean[c] += delta / count as f64;
                    m2[c] += delta * (x - mean[c]);
                }
            }
        }
        if count == 0 {
            return Err(Error::Data("cannot compute normalization of an empty split".into()));
        }
        let std = m2
            .iter()
            .map(|v| (v / count as f64).sqrt().max(1e-6))
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn normalize(&self, s: &PatientState) -> [f64; N_STATE_CHANNELS] {
        let mut out = s.to_array();
        for c in 0..N_STATE_CHANNELS {
            out[c] = (out[c] - self.mean[c]) / self.std[c];
        }
        out
    }
}

/// Shuffles episode indices and splits by episode, never within one.
pub fn split_dataset(n_episodes: usize, ratio: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if n_episodes < 2 {
        return Err(Error::Data(format!(
            "need at least 2 episodes to split, got {n_episodes}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} must be in (0, 1)")));
    }
    let mut ids: Vec<u32> = (0..n_episodes as u32).collect();
    ids.shuffle(&mut rng_from(seed));
    let n_train = ((ratio * n_episodes as f64).round() as usize).clamp(1, n_episodes - 1);
    let (train, test) = ids.split_at(n_train);
    Ok((train.to_vec(), test.to_vec()))
}

/// Normalized L-step windows, one per transition, in training layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub l: usize,
    /// (N, L, d) history ending at the decision step.
    pub states: Array3<f64>,
    /// (N, L, d) history shifted one step forward.
    pub next_states: Array3<f64>,
    pub actions: Vec<ActionIndex>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
    pub episode_ids: Vec<u32>,
    pub step_indices: Vec<u32>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn window(&self, i: usize) -> ArrayView2<'_, f64> {
        self.states.index_axis(ndarray::Axis(0), i)
    }

    pub fn next_window(&self, i: usize) -> ArrayView2<'_, f64> {
        self.next_states.index_axis(ndarray::Axis(0), i)
    }

    /// Indices of episode-initial windows (step 0).
    pub fn initial_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|i| self.step_indices[*i] == 0).collect()
    }
}

/// Builds one window per transition, left-padded by repeating the earliest
/// state of the episode.
pub fn make_windows(episodes: &[&Episode], l: usize, stats: &NormStats) -> Result<WindowSet> {
    if episodes.is_empty() {
        return Err(Error::Data("no episodes to window".into()));
    }
    if l == 0 {
        return Err(Error::Contract("window length must be >= 1".into()));
    }
    let n: usize = episodes.iter().map(|e| e.len()).sum();
    let d = N_STATE_CHANNELS;
    let mut states = Array3::<f64>::zeros((n, l, d));
    let mut next_states = Array3::<f64>::zeros((n, l, d));
    let mut actions = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut terminals = Vec::with_capacity(n);
    let mut episode_ids = Vec::with_capacity(n);
    let mut step_indices = Vec::with_capacity(n);

    let mut row = 0;
    for ep in episodes {
        if ep.rewards.len() != ep.len() {
            return Err(Error::Data(format!(
                "episode {} has no rewards attached",
                ep.episode_id
            )));
        }
        let normalized: Vec<[f64; N_STATE_CHANNELS]> =
            ep.states.iter().map(|s| stats.normalize(s)).collect();
        for t in 0..ep.len() {
            for j in 0..l {
                // Window ends at t; position j maps to step t-(l-1)+j,
                // clamped to the episode start.
                let src = (t + j + 1).saturating_sub(l);
                let src_next = (t + 1 + j + 1).saturating_sub(l);
                for c in 0..d {
                    states[[row, j, c]] = normalized[src][c];
                    next_states[[row, j, c]] = normalized[src_next][c];
                }
            }
            actions.push(ep.actions[t]);
            rewards.push(ep.rewards[t]);
            terminals.push(t == ep.len() - 1);
            episode_ids.push(ep.episode_id);
            step_indices.push(t as u32);
            row += 1;
        }
    }
    Ok(WindowSet {
        l,
        states,
        next_states,
        actions,
        rewards,
        terminals,
        episode_ids,
        step_indices,
    })
}
