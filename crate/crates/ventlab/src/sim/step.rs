//! Full twin transition: mechanics -> gas exchange -> injury -> vitals/labs
//! coupling -> process noise -> physiologic clamping.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Action;
use crate::error::Result;
use crate::rng::rng_from;
use crate::sim::gas::{
    gas_exchange_step, gas_exchange_targets, henderson_hasselbalch_ph, o2_saturation,
    GasExchangeInputs,
};
use crate::sim::injury::{injury_update, peep_recruitment, InjuryParams};
use crate::sim::mechanics::simulate_breath_mechanics;
use crate::sim::types::{BloodGas, MechanicsObservation, TwinParams, TwinState, Vitals};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub injury: InjuryParams,
    /// Per-step relaxation of blood gases toward their steady-state targets.
    pub relax_kappa: f64,
    /// bpm of tachycardia per mmHg of PaO2 below 60.
    pub hr_hypoxia_slope: f64,
    /// mmol/L of lactate produced per mmHg of PaO2 below 60 per step.
    pub lactate_hypoxia_slope: f64,
    /// Mean-reversion rate of the vitals/labs random walks.
    pub reversion_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            injury: InjuryParams::default(),
            relax_kappa: 0.8,
            hr_hypoxia_slope: 0.5,
            lactate_hypoxia_slope: 0.02,
            reversion_rate: 0.2,
        }
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Builds the equilibrium state of a twin ventilated at `init_action`.
///
/// Blood gases start at their steady-state targets so episode starts are
/// consistent with whatever initial settings the behavior policy applies.
pub fn initial_twin_state(
    params: &TwinParams,
    init_action: &Action,
    cfg: &SimConfig,
) -> Result<TwinState> {
    params.validate()?;
    let effective_shunt = (params.base_shunt_fraction
        * peep_recruitment(init_action.peep_cmh2o, cfg.injury.recruit_rate))
    .min(cfg.injury.shunt_cap);
    let mut state = TwinState {
        params: params.clone(),
        injury_level: 0.0,
        effective_compliance_ml_per_cmh2o: params.compliance_ml_per_cmh2o,
        effective_shunt_fraction: effective_shunt,
        blood_gas: BloodGas {
            pao2_mmhg: 90.0,
            paco2_mmhg: 40.0,
            ph: 7.4,
        },
        vitals: Vitals {
            hr_bpm: params.baselines.hr,
            sbp_mmhg: params.baselines.sbp,
            dbp_mmhg: params.baselines.dbp,
            map_mmhg: (params.baselines.sbp + 2.0 * params.baselines.dbp) / 3.0,
            temp_c: params.baselines.temp,
            spo2_frac: 0.97,
            rr_measured_per_min: init_action.rr_per_min,
        },
        labs: crate::sim::types::Labs {
            lactate: params.baselines.lactate,
            na: params.baselines.na,
            k: params.baselines.k,
            cl: params.baselines.cl,
            hco3: params.baselines.hco3,
            creatinine: params.baselines.creatinine,
            bun: params.baselines.bun,
            hb: params.hemoglobin_g_per_dl,
            wbc: params.baselines.wbc,
            platelets: params.baselines.platelets,
            gcs: params.baselines.gcs,
        },
        time_step: 0,
    };
    let mech = simulate_breath_mechanics(&state, init_action)?;
    let targets = gas_exchange_targets(&GasExchangeInputs {
        hb_g_per_dl: params.hemoglobin_g_per_dl,
        vo2_l_per_min: params.vo2_l_per_min,
        vco2_l_per_min: params.vco2_l_per_min,
        cardiac_output_l_per_min: params.cardiac_output_l_per_min,
        shunt_fraction: effective_shunt,
        va_l_per_min: mech.alveolar_ventilation_l_per_min,
        fio2: init_action.fio2,
    })?;
    state.blood_gas = BloodGas {
        pao2_mmhg: targets.pao2_mmhg,
        paco2_mmhg: targets.paco2_mmhg,
        ph: henderson_hasselbalch_ph(state.labs.hco3, targets.paco2_mmhg),
    };
    state.vitals.spo2_frac = o2_saturation(targets.pao2_mmhg)?;
    state.vitals.hr_bpm =
        params.baselines.hr + cfg.hr_hypoxia_slope * (60.0 - targets.pao2_mmhg).max(0.0);
    Ok(state)
}

/// Advances one twin by one 2-hour decision step.
///
/// Deterministic given (state, action, seed); with all noise stds zero the
/// result is exactly the deterministic transition.
pub fn step_twin(
    twin: &TwinState,
    action: &Action,
    seed: u64,
    cfg: &SimConfig,
) -> Result<(TwinState, MechanicsObservation)> {
    let mech = simulate_breath_mechanics(twin, action)?;
    let (blood_gas, _targets) = gas_exchange_step(twin, &mech, action, cfg.relax_kappa)?;
    let mut next = injury_update(twin, &mech, &cfg.injury);
    next.blood_gas = blood_gas;

    // Mean-reverting walks around per-twin baselines; hypoxia couples into
    // heart rate and lactate.
    let b = &twin.params.baselines;
    let rr = cfg.reversion_rate;
    let hypoxia = (60.0 - next.blood_gas.pao2_mmhg).max(0.0);
    next.vitals.hr_bpm = b.hr + cfg.hr_hypoxia_slope * hypoxia;
    next.vitals.sbp_mmhg += rr * (b.sbp - next.vitals.sbp_mmhg);
    next.vitals.dbp_mmhg += rr * (b.dbp - next.vitals.dbp_mmhg);
    next.vitals.temp_c += rr * (b.temp - next.vitals.temp_c);
    next.vitals.rr_measured_per_min = action.rr_per_min;
    next.labs.lactate +=
        rr * (b.lactate - next.labs.lactate) + cfg.lactate_hypoxia_slope * hypoxia;
    next.labs.na += rr * (b.na - next.labs.na);
    next.labs.k += rr * (b.k - next.labs.k);
    next.labs.cl += rr * (b.cl - next.labs.cl);
    next.labs.hco3 += rr * (b.hco3 - next.labs.hco3);
    next.labs.creatinine += rr * (b.creatinine - next.labs.creatinine);
    next.labs.bun += rr * (b.bun - next.labs.bun);
    next.labs.hb += rr * (twin.params.hemoglobin_g_per_dl - next.labs.hb);
    next.labs.wbc += rr * (b.wbc - next.labs.wbc);
    next.labs.platelets += rr * (b.platelets - next.labs.platelets);
    next.labs.gcs = b.gcs;

    // Process noise: one draw per channel in a fixed order so the stream is
    // identical whether or not individual stds are zero.
    let mut rng = rng_from(seed);
    let std = &twin.params.noise_std;
    let mut draw = |s: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        s * z
    };
    next.vitals.hr_bpm += draw(std.hr);
    next.vitals.sbp_mmhg += draw(std.sbp);
    next.vitals.dbp_mmhg += draw(std.dbp);
    next.vitals.temp_c += draw(std.temp);
    next.blood_gas.pao2_mmhg += draw(std.pao2);
    next.blood_gas.paco2_mmhg += draw(std.paco2);
    next.labs.lactate += draw(std.lactate);
    next.labs.na += draw(std.na);
    next.labs.k += draw(std.k);
    next.labs.cl += draw(std.cl);
    next.labs.hco3 += draw(std.hco3);
    next.labs.creatinine += draw(std.creatinine);
    next.labs.bun += draw(std.bun);
    next.labs.hb += draw(std.hb);
    next.labs.wbc += draw(std.wbc);
    next.labs.platelets += draw(std.platelets);
    let spo2_noise = draw(std.spo2);

    // Physiologic clamps.
    next.vitals.hr_bpm = clamp(next.vitals.hr_bpm, 20.0, 220.0);
    next.vitals.sbp_mmhg = clamp(next.vitals.sbp_mmhg, 50.0, 260.0);
    next.vitals.dbp_mmhg = clamp(next.vitals.dbp_mmhg, 20.0, 160.0);
    next.vitals.temp_c = clamp(next.vitals.temp_c, 30.0, 43.0);
    next.blood_gas.pao2_mmhg = clamp(next.blood_gas.pao2_mmhg, 20.0, 650.0);
    next.blood_gas.paco2_mmhg = clamp(next.blood_gas.paco2_mmhg, 10.0, 130.0);
    next.labs.lactate = clamp(next.labs.lactate, 0.3, 20.0);
    next.labs.na = clamp(next.labs.na, 110.0, 180.0);
    next.labs.k = clamp(next.labs.k, 2.0, 8.0);
    next.labs.cl = clamp(next.labs.cl, 80.0, 130.0);
    next.labs.hco3 = clamp(next.labs.hco3, 8.0, 50.0);
    next.labs.creatinine = clamp(next.labs.creatinine, 0.3, 8.0);
    next.labs.bun = clamp(next.labs.bun, 4.0, 120.0);
    next.labs.hb = clamp(next.labs.hb, 4.0, 20.0);
    next.labs.wbc = clamp(next.labs.wbc, 0.5, 60.0);
    next.labs.platelets = clamp(next.labs.platelets, 10.0, 900.0);

    // Derived channels from the post-noise snapshot.
    next.blood_gas.ph = henderson_hasselbalch_ph(next.labs.hco3, next.blood_gas.paco2_mmhg);
    next.vitals.map_mmhg = (next.vitals.sbp_mmhg + 2.0 * next.vitals.dbp_mmhg) / 3.0;
    next.vitals.spo2_frac = clamp(
        o2_saturation(next.blood_gas.pao2_mmhg)? + spo2_noise,
        0.30,
        1.0,
    );
    next.time_step = twin.time_step + 1;
    Ok((next, mech))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ActionBins;
    use crate::sim::test_support::{reference_params, reference_twin};
    use crate::sim::ChannelNoise;

    fn default_action() -> Action {
        ActionBins::new(0, 1, 2, 2, 3).unwrap().action()
    }

    #[test]
    fn same_seed_gives_bit_identical_next_state() {
        let mut twin = reference_twin();
        twin.params.noise_std = ChannelNoise::fraction_of_normal_range(0.02);
        let a = default_action();
        let cfg = SimConfig::default();
        let (s1, m1) = step_twin(&twin, &a, 12345, &cfg).unwrap();
        let (s2, m2) = step_twin(&twin, &a, 12345, &cfg).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(m1, m2);
        let (s3, _) = step_twin(&twin, &a, 54321, &cfg).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn zero_noise_is_the_deterministic_transition() {
        let mut params = reference_params();
        params.noise_std = ChannelNoise::zero();
        let cfg = SimConfig::default();
        let twin = initial_twin_state(&params, &default_action(), &cfg).unwrap();
        let (a, _) = step_twin(&twin, &default_action(), 1, &cfg).unwrap();
        let (b, _) = step_twin(&twin, &default_action(), 999, &cfg).unwrap();
        assert_eq!(a, b, "with zero noise the seed must not matter");
    }

    #[test]
    fn pao2_strictly_increases_when_fio2_steps_up() {
        let mut params = reference_params();
        params.noise_std = ChannelNoise::zero();
        let cfg = SimConfig::default();
        let base = ActionBins::new(1, 0, 2, 2, 3).unwrap();
        let twin = initial_twin_state(&params, &base.action(), &cfg).unwrap();
        let mut last = -1.0;
        for fio2 in 0..8 {
            let a = ActionBins::new(1, fio2, 2, 2, 3).unwrap().action();
            let (next, _) = step_twin(&twin, &a, 7, &cfg).unwrap();
            assert!(
                next.blood_gas.pao2_mmhg > last,
                "fio2 bin {fio2}: {} !> {last}",
                next.blood_gas.pao2_mmhg
            );
            last = next.blood_gas.pao2_mmhg;
        }
    }

    #[test]
    fn time_step_advances_and_injury_monotone_under_harsh_settings() {
        let mut params = reference_params();
        params.noise_std = ChannelNoise::zero();
        let cfg = SimConfig::default();
        let harsh = ActionBins::new(5, 7, 6, 4, 7).unwrap().action(); // PEEP 18 + Pvent 25
        let mut twin = initial_twin_state(&params, &harsh, &cfg).unwrap();
        let mut last_injury = twin.injury_level;
        for t in 0..10 {
            let (next, mech) = step_twin(&twin, &harsh, t, &cfg).unwrap();
            assert_eq!(next.time_step, twin.time_step + 1);
            assert!(mech.driving_pressure_cmh2o == 25.0);
            assert!(next.injury_level > last_injury, "PIP 43 must accrue injury");
            last_injury = next.injury_level;
            twin = next;
        }
    }
}
