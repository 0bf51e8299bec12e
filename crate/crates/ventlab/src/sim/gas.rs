//! Steady-state gas exchange with shunt mixing.
//!
//! Per decision step the solver computes target blood gases from alveolar
//! ventilation and FiO2 (alveolar gas equation, Severinghaus saturation,
//! Fick O2 balance, venous admixture), then relaxes the stored blood gas
//! toward the targets with coefficient kappa.

use crate::data::Action;
use crate::error::{Error, Result};
use crate::sim::types::{BloodGas, MechanicsObservation, TwinState};

const BAROMETRIC_MMHG: f64 = 760.0;
const WATER_VAPOR_MMHG: f64 = 47.0;
const PACO2_CAP_MMHG: f64 = 130.0;
const PAO2_BRACKET: (f64, f64) = (0.5, 700.0);

/// Severinghaus hemoglobin O2 saturation, S = 1 / (1 + 23400/(p^3 + 150 p)).
pub fn o2_saturation(p_mmhg: f64) -> Result<f64> {
    if !(p_mmhg > 0.0) {
        return Err(Error::Domain(format!(
            "O2 saturation requires a positive partial pressure, got {p_mmhg}"
        )));
    }
    Ok(1.0 / (1.0 + 23_400.0 / (p_mmhg.powi(3) + 150.0 * p_mmhg)))
}

/// Arterial O2 content in mL O2 per dL blood.
pub fn o2_content(hb_g_per_dl: f64, p_mmhg: f64) -> f64 {
    let s = 1.0 / (1.0 + 23_400.0 / (p_mmhg.powi(3) + 150.0 * p_mmhg));
    1.34 * hb_g_per_dl * s + 0.003 * p_mmhg
}

/// Steady-state PaCO2 target for a given CO2 production and alveolar
/// ventilation, capped when ventilation collapses.
pub fn paco2_target(vco2_l_per_min: f64, va_l_per_min: f64) -> f64 {
    if va_l_per_min <= 0.0 {
        return PACO2_CAP_MMHG;
    }
    (863.0 * vco2_l_per_min / va_l_per_min).min(PACO2_CAP_MMHG)
}

/// Inverts the O2 content curve by bisection. Returns the pressure and
/// whether the target content fell outside the achievable bracket.
pub fn pao2_from_content(hb_g_per_dl: f64, target_content: f64) -> (f64, bool) {
    let (mut lo, mut hi) = PAO2_BRACKET;
    if target_content <= o2_content(hb_g_per_dl, lo) {
        return (lo, true);
    }
    if target_content >= o2_content(hb_g_per_dl, hi) {
        return (hi, true);
    }
    // Content is strictly increasing in p, so plain bisection converges.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if o2_content(hb_g_per_dl, mid) < target_content {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    (0.5 * (lo + hi), false)
}

/// Physiological inputs to the steady-state solve.
#[derive(Debug, Clone, Copy)]
pub struct GasExchangeInputs {
    pub hb_g_per_dl: f64,
    pub vo2_l_per_min: f64,
    pub vco2_l_per_min: f64,
    pub cardiac_output_l_per_min: f64,
    pub shunt_fraction: f64,
    pub va_l_per_min: f64,
    pub fio2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GasTargets {
    pub pao2_mmhg: f64,
    pub paco2_mmhg: f64,
    /// Alveolar O2 tension from the alveolar gas equation.
    pub alveolar_po2_mmhg: f64,
    /// End-capillary O2 content (mL/dL).
    pub capillary_content: f64,
    /// Arterial O2 content after venous admixture (mL/dL).
    pub arterial_content: f64,
    /// True when the content inversion had to clamp to its bracket.
    pub clamped: bool,
}

/// Solves the steady-state blood-gas targets for one step.
pub fn gas_exchange_targets(inp: &GasExchangeInputs) -> Result<GasTargets> {
    if inp.shunt_fraction >= 1.0 {
        return Err(Error::Parameter(format!(
            "shunt fraction {} must be < 1",
            inp.shunt_fraction
        )));
    }
    if inp.shunt_fraction < 0.0 {
        return Err(Error::Parameter("shunt fraction must be >= 0".into()));
    }
    let paco2 = paco2_target(inp.vco2_l_per_min, inp.va_l_per_min);
    let rq = inp.vco2_l_per_min / inp.vo2_l_per_min;
    let pao2_alv = (inp.fio2 * (BAROMETRIC_MMHG - WATER_VAPOR_MMHG) - paco2 / rq).max(1.0);
    let cc = o2_content(inp.hb_g_per_dl, pao2_alv);
    // Fick: arteriovenous content difference in mL/dL.
    let av_diff = 100.0 * inp.vo2_l_per_min / inp.cardiac_output_l_per_min;
    // Venous admixture fixed point Ca = (1-Qs)*Cc + Qs*(Ca - av_diff).
    let ca = cc - inp.shunt_fraction * av_diff / (1.0 - inp.shunt_fraction);
    let (pao2, clamped) = pao2_from_content(inp.hb_g_per_dl, ca);
    Ok(GasTargets {
        pao2_mmhg: pao2,
        paco2_mmhg: paco2,
        alveolar_po2_mmhg: pao2_alv,
        capillary_content: cc,
        arterial_content: ca,
        clamped,
    })
}

pub(crate) fn henderson_hasselbalch_ph(hco3: f64, paco2: f64) -> f64 {
    6.1 + (hco3 / (0.03 * paco2)).log10()
}

/// Relaxes the twin's blood gas toward this step's steady-state targets.
pub fn gas_exchange_step(
    twin: &TwinState,
    mech: &MechanicsObservation,
    action: &Action,
    kappa: f64,
) -> Result<(BloodGas, GasTargets)> {
    let targets = gas_exchange_targets(&GasExchangeInputs {
        hb_g_per_dl: twin.params.hemoglobin_g_per_dl,
        vo2_l_per_min: twin.params.vo2_l_per_min,
        vco2_l_per_min: twin.params.vco2_l_per_min,
        cardiac_output_l_per_min: twin.params.cardiac_output_l_per_min,
        shunt_fraction: twin.effective_shunt_fraction,
        va_l_per_min: mech.alveolar_ventilation_l_per_min,
        fio2: action.fio2,
    })?;
    let pao2 = twin.blood_gas.pao2_mmhg + kappa * (targets.pao2_mmhg - twin.blood_gas.pao2_mmhg);
    let paco2 =
        twin.blood_gas.paco2_mmhg + kappa * (targets.paco2_mmhg - twin.blood_gas.paco2_mmhg);
    Ok((
        BloodGas {
            pao2_mmhg: pao2,
            paco2_mmhg: paco2,
            ph: henderson_hasselbalch_ph(twin.labs.hco3, paco2),
        },
        targets,
    ))
}
