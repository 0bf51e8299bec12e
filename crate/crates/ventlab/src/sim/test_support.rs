//! Canonical twin fixtures shared by unit, integration, and acceptance tests.

use crate::sim::types::{Baselines, BloodGas, ChannelNoise, Labs, Sex, TwinParams, TwinState, Vitals};

/// A mid-range twin with zero process noise.
pub fn reference_params() -> TwinParams {
    TwinParams {
        compliance_ml_per_cmh2o: 45.0,
        resistance_cmh2o_s_per_l: 12.0,
        base_shunt_fraction: 0.12,
        deadspace_ml: 150.0,
        vo2_l_per_min: 0.25,
        vco2_l_per_min: 0.2,
        hemoglobin_g_per_dl: 12.0,
        cardiac_output_l_per_min: 5.0,
        weight_kg: 75.0,
        age_years: 55.0,
        sex: Sex::Male,
        noise_std: ChannelNoise::zero(),
        baselines: Baselines {
            hr: 80.0,
            sbp: 120.0,
            dbp: 70.0,
            temp: 37.0,
            lactate: 1.2,
            na: 140.0,
            k: 4.2,
            cl: 102.0,
            hco3: 24.0,
            creatinine: 0.9,
            bun: 14.0,
            wbc: 9.0,
            platelets: 250.0,
            gcs: 14.0,
        },
    }
}

/// `reference_params` wrapped in a healthy mid-range state.
pub fn reference_twin() -> TwinState {
    let params = reference_params();
    TwinState {
        effective_compliance_ml_per_cmh2o: params.compliance_ml_per_cmh2o,
        effective_shunt_fraction: params.base_shunt_fraction,
        injury_level: 0.0,
        blood_gas: BloodGas {
            pao2_mmhg: 90.0,
            paco2_mmhg: 40.0,
            ph: 7.4,
        },
        vitals: Vitals {
            hr_bpm: 80.0,
            sbp_mmhg: 120.0,
            dbp_mmhg: 70.0,
            map_mmhg: (120.0 + 140.0) / 3.0,
            temp_c: 37.0,
            spo2_frac: 0.97,
            rr_measured_per_min: 14.0,
        },
        labs: Labs {
            lactate: 1.2,
            na: 140.0,
            k: 4.2,
            cl: 102.0,
            hco3: 24.0,
            creatinine: 0.9,
            bun: 14.0,
            hb: 12.0,
            wbc: 9.0,
            platelets: 250.0,
            gcs: 14.0,
        },
        params,
        time_step: 0,
    }
}
