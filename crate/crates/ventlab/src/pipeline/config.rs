//! The single flat run configuration file.
//!
//! Every module's settings live in one TOML document so a run is fully
//! described by (config, master seed). Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::baselines::BcConfig;
use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::fqe::FqeConfig;
use crate::net::ModelConfig;
use crate::online::OodMode;
use crate::sim::{CohortRanges, SimConfig};
use crate::tcql::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSection {
    pub n: usize,
    pub ranges: CohortRanges,
}

impl Default for CohortSection {
    fn default() -> Self {
        CohortSection { n: 98, ranges: CohortRanges::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcqSection {
    pub threshold: f64,
    pub bc: BcConfig,
}

impl Default for BcqSection {
    fn default() -> Self {
        BcqSection { threshold: 0.3, bc: BcConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FqeSection {
    pub fit: FqeConfig,
    /// Independent FQE fits whose score spread is reported.
    pub n_seeds: usize,
}

impl Default for FqeSection {
    fn default() -> Self {
        FqeSection { fit: FqeConfig::default(), n_seeds: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodModeName {
    ExtendedParams,
    FeatureShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodSection {
    pub mode: OodModeName,
    /// Range widening used by the extended-params mode.
    pub extension: f64,
    /// Z-score offset used by the feature-shift mode.
    pub offset_std: f64,
    /// Number of out-of-distribution windows to evaluate.
    pub count: usize,
}

impl Default for OodSection {
    fn default() -> Self {
        OodSection {
            mode: OodModeName::FeatureShift,
            extension: 0.2,
            offset_std: 3.0,
            count: 200,
        }
    }
}

impl OodSection {
    pub fn to_mode(&self) -> OodMode {
        match self.mode {
            OodModeName::ExtendedParams => OodMode::ExtendedParams { extension: self.extension },
            OodModeName::FeatureShift => OodMode::FeatureShift { offset_std: self.offset_std },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    /// Rollout seeds per policy (the reported mean/std spread).
    pub n_seeds: usize,
    pub ood: OodSection,
}

impl Default for OnlineSection {
    fn default() -> Self {
        OnlineSection { n_seeds: 5, ood: OodSection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub cohort: CohortSection,
    pub sim: SimConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub bcq: BcqSection,
    pub fqe: FqeSection,
    pub online: OnlineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 42,
            cohort: CohortSection::default(),
            sim: SimConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            bcq: BcqSection::default(),
            fqe: FqeSection::default(),
            online: OnlineSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Every module-level constraint, checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.cohort.n == 0 {
            return Err(Error::Config("cohort.n must be >= 1".into()));
        }
        self.cohort.ranges.validate()?;
        self.dataset.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.state_dim != crate::data::N_STATE_CHANNELS {
            return Err(Error::Config(format!(
                "model.state_dim must equal the {}-channel observed state",
                crate::data::N_STATE_CHANNELS
            )));
        }
        if self.model.n_actions != crate::data::N_ACTIONS {
            return Err(Error::Config(format!(
                "model.n_actions must equal the {}-cell action grid",
                crate::data::N_ACTIONS
            )));
        }
        if !(self.bcq.threshold > 0.0 && self.bcq.threshold <= 1.0) {
            return Err(Error::Config("bcq.threshold must be in (0, 1]".into()));
        }
        if self.fqe.n_seeds == 0 || self.online.n_seeds == 0 {
            return Err(Error::Config("fqe.n_seeds and online.n_seeds must be >= 1".into()));
        }
        if self.online.ood.count == 0 {
            return Err(Error::Config("online.ood.count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("master_seed = 1\nbogus_key = true\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err =
            RunConfig::from_toml("[dataset]\nepisodes_per_twin = 5\nnot_a_field = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let cfg = RunConfig::from_toml("master_seed = 7\n[cohort]\nn = 12\n").unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.cohort.n, 12);
        assert_eq!(cfg.dataset.horizon, 24);
        assert_eq!(cfg.online.n_seeds, 5);
    }

    #[test]
    fn invalid_sections_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.model.n_actions = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.bcq.threshold = 0.0;
        assert!(cfg.validate().is_err());
    }
}
