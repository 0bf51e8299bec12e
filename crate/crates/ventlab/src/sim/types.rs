//! Twin parameter and state records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    /// Encoding used in the observed state vector (male = 1, female = 0).
    pub fn as_f64(self) -> f64 {
        match self {
            Sex::Male => 1.0,
            Sex::Female => 0.0,
        }
    }
}

/// Per-channel process-noise standard deviations (physical units).
///
/// The default is 2% of each channel's normal range; `zero` turns the
/// stochastic term off entirely so the transition is the deterministic map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    pub hr: f64,
    pub sbp: f64,
    pub dbp: f64,
    pub temp: f64,
    pub spo2: f64,
    pub pao2: f64,
    pub paco2: f64,
    pub lactate: f64,
    pub na: f64,
    pub k: f64,
    pub cl: f64,
    pub hco3: f64,
    pub creatinine: f64,
    pub bun: f64,
    pub hb: f64,
    pub wbc: f64,
    pub platelets: f64,
}

/// (low, high) of the textbook normal band per noisy channel.
const NORMAL_RANGES: ChannelNoise = ChannelNoise {
    hr: 40.0,        // 60-100 bpm
    sbp: 40.0,       // 100-140 mmHg
    dbp: 30.0,       // 60-90 mmHg
    temp: 1.0,       // 36.5-37.5 C
    spo2: 0.06,      // 0.94-1.00
    pao2: 25.0,      // 75-100 mmHg
    paco2: 10.0,     // 35-45 mmHg
    lactate: 1.5,    // 0.5-2.0 mmol/L
    na: 10.0,        // 135-145 mmol/L
    k: 1.5,          // 3.5-5.0 mmol/L
    cl: 8.0,         // 98-106 mmol/L
    hco3: 4.0,       // 22-26 mmol/L
    creatinine: 0.6, // 0.6-1.2 mg/dL
    bun: 12.0,       // 8-20 mg/dL
    hb: 4.0,         // 12-16 g/dL
    wbc: 7.0,        // 4-11 x10^9/L
    platelets: 250.0, // 150-400 x10^9/L
};

impl ChannelNoise {
    pub fn zero() -> Self {
        ChannelNoise {
            hr: 0.0,
            sbp: 0.0,
            dbp: 0.0,
            temp: 0.0,
            spo2: 0.0,
            pao2: 0.0,
            paco2: 0.0,
            lactate: 0.0,
            na: 0.0,
            k: 0.0,
            cl: 0.0,
            hco3: 0.0,
            creatinine: 0.0,
            bun: 0.0,
            hb: 0.0,
            wbc: 0.0,
            platelets: 0.0,
        }
    }

    /// Std set to `frac` of each channel's normal-range width.
    pub fn fraction_of_normal_range(frac: f64) -> Self {
        let r = NORMAL_RANGES;
        ChannelNoise {
            hr: frac * r.hr,
            sbp: frac * r.sbp,
            dbp: frac * r.dbp,
            temp: frac * r.temp,
            spo2: frac * r.spo2,
            pao2: frac * r.pao2,
            paco2: frac * r.paco2,
            lactate: frac * r.lactate,
            na: frac * r.na,
            k: frac * r.k,
            cl: frac * r.cl,
            hco3: frac * r.hco3,
            creatinine: frac * r.creatinine,
            bun: frac * r.bun,
            hb: frac * r.hb,
            wbc: frac * r.wbc,
            platelets: frac * r.platelets,
        }
    }

    pub fn is_zero(&self) -> bool {
        let ChannelNoise {
            hr,
            sbp,
            dbp,
            temp,
            spo2,
            pao2,
            paco2,
            lactate,
            na,
            k,
            cl,
            hco3,
            creatinine,
            bun,
            hb,
            wbc,
            platelets,
        } = *self;
        [
            hr, sbp, dbp, temp, spo2, pao2, paco2, lactate, na, k, cl, hco3, creatinine, bun, hb,
            wbc, platelets,
        ]
        .iter()
        .all(|s| *s == 0.0)
    }

    fn all_non_negative(&self) -> bool {
        let c = *self;
        [
            c.hr, c.sbp, c.dbp, c.temp, c.spo2, c.pao2, c.paco2, c.lactate, c.na, c.k, c.cl,
            c.hco3, c.creatinine, c.bun, c.hb, c.wbc, c.platelets,
        ]
        .iter()
        .all(|s| *s >= 0.0)
    }
}

/// Per-twin resting values the vitals/labs random walks revert to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub hr: f64,
    pub sbp: f64,
    pub dbp: f64,
    pub temp: f64,
    pub lactate: f64,
    pub na: f64,
    pub k: f64,
    pub cl: f64,
    pub hco3: f64,
    pub creatinine: f64,
    pub bun: f64,
    pub wbc: f64,
    pub platelets: f64,
    pub gcs: f64,
}

/// Fixed physiological parameters of one digital twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinParams {
    pub compliance_ml_per_cmh2o: f64,
    pub resistance_cmh2o_s_per_l: f64,
    pub base_shunt_fraction: f64,
    pub deadspace_ml: f64,
    pub vo2_l_per_min: f64,
    pub vco2_l_per_min: f64,
    pub hemoglobin_g_per_dl: f64,
    pub cardiac_output_l_per_min: f64,
    pub weight_kg: f64,
    pub age_years: f64,
    pub sex: Sex,
    pub noise_std: ChannelNoise,
    pub baselines: Baselines,
}

impl TwinParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        let checks: [(bool, &str); 10] = [
            (
                (15.0..=90.0).contains(&p.compliance_ml_per_cmh2o),
                "compliance must be in [15, 90] mL/cmH2O",
            ),
            (
                (5.0..=30.0).contains(&p.resistance_cmh2o_s_per_l),
                "resistance must be in [5, 30] cmH2O*s/L",
            ),
            (
                (0.02..=0.45).contains(&p.base_shunt_fraction),
                "base shunt fraction must be in [0.02, 0.45]",
            ),
            (
                (100.0..=250.0).contains(&p.deadspace_ml),
                "deadspace must be in [100, 250] mL",
            ),
            (p.vo2_l_per_min > 0.0, "VO2 must be positive"),
            (
                {
                    let rq = p.vco2_l_per_min / p.vo2_l_per_min;
                    (0.7..=1.0).contains(&rq)
                },
                "respiratory quotient VCO2/VO2 must be in [0.7, 1.0]",
            ),
            (p.hemoglobin_g_per_dl > 0.0, "hemoglobin must be positive"),
            (
                p.cardiac_output_l_per_min > 0.0,
                "cardiac output must be positive",
            ),
            (p.weight_kg > 0.0, "weight must be positive"),
            (p.age_years > 0.0, "age must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Parameter(msg.to_string()));
            }
        }
        if !self.noise_std.all_non_negative() {
            return Err(Error::Parameter("noise stds must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BloodGas {
    pub pao2_mmhg: f64,
    pub paco2_mmhg: f64,
    pub ph: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vitals {
    pub hr_bpm: f64,
    pub sbp_mmhg: f64,
    pub dbp_mmhg: f64,
    pub map_mmhg: f64,
    pub temp_c: f64,
    pub spo2_frac: f64,
    pub rr_measured_per_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labs {
    pub lactate: f64,
    pub na: f64,
    pub k: f64,
    pub cl: f64,
    pub hco3: f64,
    pub creatinine: f64,
    pub bun: f64,
    pub hb: f64,
    pub wbc: f64,
    pub platelets: f64,
    pub gcs: f64,
}

/// Full hidden state of a twin at one 2-hour decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub params: TwinParams,
    pub injury_level: f64,
    pub effective_compliance_ml_per_cmh2o: f64,
    pub effective_shunt_fraction: f64,
    pub blood_gas: BloodGas,
    pub vitals: Vitals,
    pub labs: Labs,
    pub time_step: u32,
}

/// Ventilation mechanics measured over one decision step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicsObservation {
    pub pip_cmh2o: f64,
    pub peep_set_cmh2o: f64,
    pub auto_peep_cmh2o: f64,
    pub tidal_volume_ml: f64,
    pub driving_pressure_cmh2o: f64,
    pub alveolar_ventilation_l_per_min: f64,
    pub mechanical_power_proxy: f64,
}
