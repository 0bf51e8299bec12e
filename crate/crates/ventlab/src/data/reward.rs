//! Reward: terminal survival outcome plus normalized intermediate
//! improvements in severity score and driving pressure.

use serde::{Deserialize, Serialize};

use crate::data::apache::apache2_score;
use crate::data::state::PatientState;
use crate::error::{Error, Result};
use crate::sim::MechanicsObservation;

/// Normalizers taken from the training split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardNorms {
    pub apache_max: f64,
    pub dp_max: f64,
}

impl RewardNorms {
    pub fn validate(&self) -> Result<()> {
        if !(self.apache_max > 0.0 && self.dp_max > 0.0) {
            return Err(Error::Contract(format!(
                "reward norms must be positive, got apache_max={} dp_max={}",
                self.apache_max, self.dp_max
            )));
        }
        Ok(())
    }
}

/// Reward for the transition from `s_t` to `s_t1`.
///
/// Terminal transitions return the survival outcome (+1 survived, -1 died).
/// Non-terminal transitions blend the severity-score delta and the
/// driving-pressure delta, each normalized by its training-split maximum and
/// weighted 0.5; the result is clamped to [-1, 1].
#[allow(clippy::too_many_arguments)]
pub fn compute_reward(
    s_t: &PatientState,
    s_t1: &PatientState,
    mech_t: &MechanicsObservation,
    mech_t1: &MechanicsObservation,
    fio2_t: f64,
    fio2_t1: f64,
    terminal: bool,
    survived: Option<bool>,
    norms: &RewardNorms,
) -> Result<f64> {
    norms.validate()?;
    if terminal {
        return match survived {
            Some(true) => Ok(1.0),
            Some(false) => Ok(-1.0),
            None => Err(Error::Contract(
                "terminal transition requires a survival flag".into(),
            )),
        };
    }
    let apache_t = f64::from(apache2_score(s_t, fio2_t));
    let apache_t1 = f64::from(apache2_score(s_t1, fio2_t1));
    let d_apache = (apache_t - apache_t1) / norms.apache_max;
    let d_dp = (mech_t.driving_pressure_cmh2o - mech_t1.driving_pressure_cmh2o) / norms.dp_max;
    Ok((0.5 * d_apache + 0.5 * d_dp).clamp(-1.0, 1.0))
}
