//! Cumulative ventilator-induced injury dynamics.
//!
//! Injury accrues when driving pressure or peak pressure cross their
//! lung-protective thresholds and never heals. Rising injury stiffens the
//! lung (lower effective compliance) and worsens venous admixture, while
//! higher PEEP recruits lung and counteracts the shunt term.

use serde::{Deserialize, Serialize};

use crate::sim::types::{MechanicsObservation, TwinState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjuryParams {
    pub dp_threshold_cmh2o: f64,
    pub pip_threshold_cmh2o: f64,
    pub eta_dp: f64,
    pub eta_pip: f64,
    pub compliance_decay: f64,
    pub recruit_rate: f64,
    pub shunt_cap: f64,
}

impl Default for InjuryParams {
    fn default() -> Self {
        InjuryParams {
            dp_threshold_cmh2o: 15.0,
            pip_threshold_cmh2o: 30.0,
            eta_dp: 0.01,
            eta_pip: 0.02,
            compliance_decay: 0.5,
            recruit_rate: 0.06,
            shunt_cap: 0.9,
        }
    }
}

/// PEEP recruitment factor exp(-rate * (PEEP - 5)) for PEEP >= 5.
pub fn peep_recruitment(peep_cmh2o: f64, rate: f64) -> f64 {
    (-rate * (peep_cmh2o - 5.0).max(0.0)).exp()
}

/// Applies one step of injury accrual and refreshes the effective
/// compliance and shunt derived from it.
pub fn injury_update(twin: &TwinState, mech: &MechanicsObservation, p: &InjuryParams) -> TwinState {
    let mut next = twin.clone();
    let delta = p.eta_dp * (mech.driving_pressure_cmh2o - p.dp_threshold_cmh2o).max(0.0)
        + p.eta_pip * (mech.pip_cmh2o - p.pip_threshold_cmh2o).max(0.0);
    next.injury_level = twin.injury_level + delta;
    next.effective_compliance_ml_per_cmh2o =
        twin.params.compliance_ml_per_cmh2o * (-p.compliance_decay * next.injury_level).exp();
    next.effective_shunt_fraction = (twin.params.base_shunt_fraction
        * (1.0 + next.injury_level)
        * peep_recruitment(mech.peep_set_cmh2o, p.recruit_rate))
    .min(p.shunt_cap);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::test_support::reference_twin;
    use approx::assert_relative_eq;

    fn mech(dp: f64, pip: f64, peep: f64) -> MechanicsObservation {
        MechanicsObservation {
            pip_cmh2o: pip,
            peep_set_cmh2o: peep,
            auto_peep_cmh2o: 0.0,
            tidal_volume_ml: 400.0,
            driving_pressure_cmh2o: dp,
            alveolar_ventilation_l_per_min: 5.0,
            mechanical_power_proxy: 10.0,
        }
    }

    #[test]
    fn below_both_thresholds_no_injury_accrues() {
        let twin = reference_twin();
        let next = injury_update(&twin, &mech(12.0, 22.0, 10.0), &InjuryParams::default());
        assert_eq!(next.injury_level, twin.injury_level);
    }

    #[test]
    fn dp_excess_accrues_at_eta_dp() {
        let twin = reference_twin();
        let next = injury_update(&twin, &mech(20.0, 28.0, 8.0), &InjuryParams::default());
        assert_relative_eq!(next.injury_level - twin.injury_level, 0.01 * 5.0, epsilon = 1e-12);
    }

    #[test]
    fn healthy_twin_keeps_base_compliance() {
        let mut twin = reference_twin();
        twin.injury_level = 0.0;
        let next = injury_update(&twin, &mech(10.0, 15.0, 5.0), &InjuryParams::default());
        assert_eq!(next.injury_level, 0.0);
        assert_relative_eq!(
            next.effective_compliance_ml_per_cmh2o,
            twin.params.compliance_ml_per_cmh2o,
            epsilon = 1e-12
        );
    }

    #[test]
    fn injury_never_decreases_and_compliance_never_exceeds_base() {
        let mut twin = reference_twin();
        let p = InjuryParams::default();
        for step in 0..50 {
            let dp = if step % 2 == 0 { 25.0 } else { 8.0 };
            let next = injury_update(&twin, &mech(dp, dp + 10.0, 10.0), &p);
            assert!(next.injury_level >= twin.injury_level);
            assert!(
                next.effective_compliance_ml_per_cmh2o <= twin.params.compliance_ml_per_cmh2o
            );
            assert!(next.effective_shunt_fraction >= 0.0);
            assert!(next.effective_shunt_fraction <= p.shunt_cap);
            twin = next;
        }
    }

    #[test]
    fn higher_peep_recruits_down_the_shunt() {
        let twin = reference_twin();
        let p = InjuryParams::default();
        let low = injury_update(&twin, &mech(10.0, 15.0, 5.0), &p);
        let high = injury_update(&twin, &mech(10.0, 25.0, 15.0), &p);
        assert!(high.effective_shunt_fraction < low.effective_shunt_fraction);
    }
}
