//! Pressure-controlled breath mechanics on a single-compartment RC lung.
//!
//! Within each breath the alveolar pressure charges toward PIP during
//! inspiration and discharges toward PEEP during expiration, both with time
//! constant RC. At the periodic steady state the end-inspiratory and
//! end-expiratory pressures (P_ei, P_ee) satisfy
//!
//!   P_ei = PIP  - (PIP  - P_ee) * exp(-T_i / RC)
//!   P_ee = PEEP + (P_ei - PEEP) * exp(-T_e / RC)
//!
//! which is a linear 2x2 system solved in closed form; the fixed-point
//! iteration is kept as an independent route for cross-checks.

use crate::data::Action;
use crate::error::{Error, Result};
use crate::sim::types::{MechanicsObservation, TwinState};

#[derive(Debug, Clone, Copy)]
pub struct BreathTimings {
    pub t_insp_s: f64,
    pub t_exp_s: f64,
}

/// Splits the cycle time 60/RR into inspiratory and expiratory phases i:e.
pub fn breath_timings(action: &Action) -> BreathTimings {
    let t_tot = 60.0 / action.rr_per_min;
    let fi = action.insp_fraction();
    BreathTimings {
        t_insp_s: t_tot * fi,
        t_exp_s: t_tot * (1.0 - fi),
    }
}

/// Closed-form periodic steady state (P_ei, P_ee).
pub fn breath_pressures_closed_form(
    pip: f64,
    peep: f64,
    timings: BreathTimings,
    rc_s: f64,
) -> (f64, f64) {
    let e1 = (-timings.t_insp_s / rc_s).exp();
    let e2 = (-timings.t_exp_s / rc_s).exp();
    // Contraction factor e1*e2 < 1 for any positive phase times.
    debug_assert!(e1 * e2 < 1.0);
    let dp = pip - peep;
    let a = dp * (1.0 - e1) / (1.0 - e1 * e2); // P_ei - PEEP
    let b = a * e2; // P_ee - PEEP
    (peep + a, peep + b)
}

/// Fixed-point iteration of the same two equations, to tolerance `tol`.
pub fn breath_pressures_iterative(
    pip: f64,
    peep: f64,
    timings: BreathTimings,
    rc_s: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let e1 = (-timings.t_insp_s / rc_s).exp();
    let e2 = (-timings.t_exp_s / rc_s).exp();
    let mut p_ee = peep;
    let mut p_ei = pip;
    for _ in 0..max_iter {
        let p_ei_new = pip - (pip - p_ee) * e1;
        let p_ee_new = peep + (p_ei_new - peep) * e2;
        let delta = (p_ei_new - p_ei).abs().max((p_ee_new - p_ee).abs());
        p_ei = p_ei_new;
        p_ee = p_ee_new;
        if delta < tol {
            break;
        }
    }
    (p_ei, p_ee)
}

/// Resolves one decision step of breath mechanics for the given settings.
pub fn simulate_breath_mechanics(
    twin: &TwinState,
    action: &Action,
) -> Result<MechanicsObservation> {
    // R [cmH2O*s/L] * C [mL/cmH2O] / 1000 -> seconds.
    let rc_s = twin.params.resistance_cmh2o_s_per_l * twin.effective_compliance_ml_per_cmh2o
        / 1000.0;
    if !(rc_s > 0.0) {
        return Err(Error::Parameter(format!(
            "non-positive RC time constant: {rc_s} s"
        )));
    }
    let peep = action.peep_cmh2o;
    let pip = action.pip_cmh2o();
    let timings = breath_timings(action);
    let (p_ei, p_ee) = breath_pressures_closed_form(pip, peep, timings, rc_s);

    let c = twin.effective_compliance_ml_per_cmh2o;
    let tidal_volume_ml = c * (p_ei - p_ee);
    let dp = pip - peep;
    let va = action.rr_per_min * (tidal_volume_ml - twin.params.deadspace_ml).max(0.0) / 1000.0;
    Ok(MechanicsObservation {
        pip_cmh2o: pip,
        peep_set_cmh2o: peep,
        auto_peep_cmh2o: p_ee - peep,
        tidal_volume_ml,
        driving_pressure_cmh2o: dp,
        alveolar_ventilation_l_per_min: va,
        mechanical_power_proxy: action.rr_per_min * (tidal_volume_ml / 1000.0) * dp,
    })
}
