//! Cohort sampling: draws per-twin parameter records from configured ranges.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::sim::types::{Baselines, ChannelNoise, Sex, TwinParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "uniform")]
    pub dist: Dist,
}

fn uniform() -> Dist {
    Dist::Uniform
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi, dist: Dist::Uniform }
    }

    pub fn log_uniform(lo: f64, hi: f64) -> Self {
        Range { lo, hi, dist: Dist::LogUniform }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::Config(format!(
                "invalid {what} range [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.dist == Dist::LogUniform && self.lo <= 0.0 {
            return Err(Error::Config(format!(
                "{what}: log-uniform range requires positive bounds"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        match self.dist {
            Dist::Uniform => rng.gen_range(self.lo..self.hi),
            Dist::LogUniform => {
                let v = rng.gen_range(self.lo.ln()..self.hi.ln());
                v.exp()
            }
        }
    }
}

/// Sampling ranges for a cohort of ventilated respiratory-failure twins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortRanges {
    pub compliance_ml_per_cmh2o: Range,
    pub resistance_cmh2o_s_per_l: Range,
    pub base_shunt_fraction: Range,
    pub deadspace_ml: Range,
    pub vo2_l_per_min: Range,
    pub respiratory_quotient: Range,
    pub hemoglobin_g_per_dl: Range,
    pub cardiac_output_l_per_min: Range,
    pub weight_kg: Range,
    pub age_years: Range,
    /// Process-noise std as a fraction of each channel's normal range.
    pub noise_fraction: f64,
}

impl Default for CohortRanges {
    fn default() -> Self {
        CohortRanges {
            compliance_ml_per_cmh2o: Range::new(20.0, 60.0),
            resistance_cmh2o_s_per_l: Range::new(8.0, 22.0),
            base_shunt_fraction: Range::new(0.08, 0.38),
            deadspace_ml: Range::log_uniform(110.0, 220.0),
            vo2_l_per_min: Range::new(0.18, 0.32),
            respiratory_quotient: Range::new(0.75, 0.95),
            hemoglobin_g_per_dl: Range::new(8.0, 15.0),
            cardiac_output_l_per_min: Range::new(3.8, 7.5),
            weight_kg: Range::new(50.0, 110.0),
            age_years: Range::new(25.0, 85.0),
            noise_fraction: 0.02,
        }
    }
}

impl CohortRanges {
    pub fn validate(&self) -> Result<()> {
        self.compliance_ml_per_cmh2o.validate("compliance")?;
        self.resistance_cmh2o_s_per_l.validate("resistance")?;
        self.base_shunt_fraction.validate("base shunt")?;
        self.deadspace_ml.validate("deadspace")?;
        self.vo2_l_per_min.validate("VO2")?;
        self.respiratory_quotient.validate("respiratory quotient")?;
        self.hemoglobin_g_per_dl.validate("hemoglobin")?;
        self.cardiac_output_l_per_min.validate("cardiac output")?;
        self.weight_kg.validate("weight")?;
        self.age_years.validate("age")?;
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::Config(format!(
                "noise fraction {} must be in [0, 1]",
                self.noise_fraction
            )));
        }
        Ok(())
    }

    /// Widens every sampling range by `frac` of its width on both sides,
    /// clipped to the hard parameter invariants.
    pub fn extended(&self, frac: f64) -> CohortRanges {
        fn ext(r: Range, frac: f64, hard_lo: f64, hard_hi: f64) -> Range {
            let w = r.width() * frac;
            Range {
                lo: (r.lo - w).max(hard_lo),
                hi: (r.hi + w).min(hard_hi),
                dist: r.dist,
            }
        }
        CohortRanges {
            compliance_ml_per_cmh2o: ext(self.compliance_ml_per_cmh2o, frac, 15.0, 90.0),
            resistance_cmh2o_s_per_l: ext(self.resistance_cmh2o_s_per_l, frac, 5.0, 30.0),
            base_shunt_fraction: ext(self.base_shunt_fraction, frac, 0.02, 0.45),
            deadspace_ml: ext(self.deadspace_ml, frac, 100.0, 250.0),
            vo2_l_per_min: ext(self.vo2_l_per_min, frac, 0.1, 0.5),
            respiratory_quotient: ext(self.respiratory_quotient, frac, 0.7, 1.0),
            hemoglobin_g_per_dl: ext(self.hemoglobin_g_per_dl, frac, 4.0, 20.0),
            cardiac_output_l_per_min: ext(self.cardiac_output_l_per_min, frac, 2.0, 12.0),
            weight_kg: ext(self.weight_kg, frac, 35.0, 180.0),
            age_years: ext(self.age_years, frac, 18.0, 100.0),
            noise_fraction: self.noise_fraction,
        }
    }
}

fn sample_twin(rng: &mut impl Rng, ranges: &CohortRanges) -> TwinParams {
    let vo2 = ranges.vo2_l_per_min.sample(rng);
    let rq = ranges.respiratory_quotient.sample(rng);
    let hb = ranges.hemoglobin_g_per_dl.sample(rng);
    let sex = if rng.gen_bool(0.5) { Sex::Male } else { Sex::Female };
    let baselines = Baselines {
        hr: rng.gen_range(65.0..95.0),
        sbp: rng.gen_range(100.0..140.0),
        dbp: rng.gen_range(55.0..85.0),
        temp: rng.gen_range(36.3..38.2),
        lactate: rng.gen_range(0.8..2.6),
        na: rng.gen_range(134.0..146.0),
        k: rng.gen_range(3.5..5.0),
        cl: rng.gen_range(97.0..107.0),
        hco3: rng.gen_range(20.0..27.0),
        creatinine: rng.gen_range(0.6..1.8),
        bun: rng.gen_range(8.0..30.0),
        wbc: rng.gen_range(5.0..17.0),
        platelets: rng.gen_range(120.0..400.0),
        gcs: f64::from(rng.gen_range(12u32..=15)),
    };
    TwinParams {
        compliance_ml_per_cmh2o: ranges.compliance_ml_per_cmh2o.sample(rng),
        resistance_cmh2o_s_per_l: ranges.resistance_cmh2o_s_per_l.sample(rng),
        base_shunt_fraction: ranges.base_shunt_fraction.sample(rng),
        deadspace_ml: ranges.deadspace_ml.sample(rng),
        vo2_l_per_min: vo2,
        vco2_l_per_min: vo2 * rq,
        hemoglobin_g_per_dl: hb,
        cardiac_output_l_per_min: ranges.cardiac_output_l_per_min.sample(rng),
        weight_kg: ranges.weight_kg.sample(rng),
        age_years: ranges.age_years.sample(rng),
        sex,
        noise_std: ChannelNoise::fraction_of_normal_range(ranges.noise_fraction),
        baselines,
    }
}

/// Draws `n` twin parameter records, reproducible by seed.
pub fn spawn_cohort(n: usize, seed: u64, ranges: &CohortRanges) -> Result<Vec<TwinParams>> {
    if n == 0 {
        return Err(Error::Config("cohort size must be at least 1".into()));
    }
    ranges.validate()?;
    let mut cohort = Vec::with_capacity(n);
    for twin_id in 0..n {
        let mut rng = rng_from(derive_seed(seed, "twin-params", &[twin_id as u64]));
        let params = sample_twin(&mut rng, ranges);
        params.validate()?;
        cohort.push(params);
    }
    Ok(cohort)
}
