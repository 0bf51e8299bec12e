//! The 24-channel observed clinical state vector.
//!
//! Commanded ventilator settings are deliberately not part of the state;
//! their downstream physiological effects (blood gases, SpO2, measured RR)
//! are.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::TwinState;

pub const N_STATE_CHANNELS: usize = 24;

/// Channel names, in vector order.
pub const CHANNELS: [&str; N_STATE_CHANNELS] = [
    "age", "sex", "weight", "hr", "sbp", "dbp", "map", "temp", "spo2", "rr_measured", "ph",
    "pao2", "paco2", "lactate", "na", "k", "cl", "hco3", "creatinine", "bun", "hb", "wbc",
    "platelets", "gcs",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientState {
    pub age: f64,
    pub sex: f64,
    pub weight: f64,
    pub hr: f64,
    pub sbp: f64,
    pub dbp: f64,
    pub map: f64,
    pub temp: f64,
    pub spo2: f64,
    pub rr_measured: f64,
    pub ph: f64,
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
    pub gcs: f64,
}

impl PatientState {
    /// Projects the observable channels out of a twin's hidden state.
    pub fn observe(twin: &TwinState) -> Self {
        PatientState {
            age: twin.params.age_years,
            sex: twin.params.sex.as_f64(),
            weight: twin.params.weight_kg,
            hr: twin.vitals.hr_bpm,
            sbp: twin.vitals.sbp_mmhg,
            dbp: twin.vitals.dbp_mmhg,
            map: twin.vitals.map_mmhg,
            temp: twin.vitals.temp_c,
            spo2: twin.vitals.spo2_frac,
            rr_measured: twin.vitals.rr_measured_per_min,
            ph: twin.blood_gas.ph,
            pao2: twin.blood_gas.pao2_mmhg,
            paco2: twin.blood_gas.paco2_mmhg,
            lactate: twin.labs.lactate,
            na: twin.labs.na,
            k: twin.labs.k,
            cl: twin.labs.cl,
            hco3: twin.labs.hco3,
            creatinine: twin.labs.creatinine,
            bun: twin.labs.bun,
            hb: twin.labs.hb,
            wbc: twin.labs.wbc,
            platelets: twin.labs.platelets,
            gcs: twin.labs.gcs,
        }
    }

    pub fn to_array(&self) -> [f64; N_STATE_CHANNELS] {
        [
            self.age,
            self.sex,
            self.weight,
            self.hr,
            self.sbp,
            self.dbp,
            self.map,
            self.temp,
            self.spo2,
            self.rr_measured,
            self.ph,
            self.pao2,
            self.paco2,
            self.lactate,
            self.na,
            self.k,
            self.cl,
            self.hco3,
            self.creatinine,
            self.bun,
            self.hb,
            self.wbc,
            self.platelets,
            self.gcs,
        ]
    }

    pub fn from_array(v: &[f64]) -> Result<Self> {
        if v.len() != N_STATE_CHANNELS {
            return Err(Error::Contract(format!(
                "state vector must have {N_STATE_CHANNELS} channels, got {}",
                v.len()
            )));
        }
        Ok(PatientState {
            age: v[0],
            sex: v[1],
            weight: v[2],
            hr: v[3],
            sbp: v[4],
            dbp: v[5],
            map: v[6],
            temp: v[7],
            spo2: v[8],
            rr_measured: v[9],
            ph: v[10],
            pao2: v[11],
            paco2: v[12],
            lactate: v[13],
            na: v[14],
            k: v[15],
            cl: v[16],
            hco3: v[17],
            creatinine: v[18],
            bun: v[19],
            hb: v[20],
            wbc: v[21],
            platelets: v[22],
            gcs: v[23],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::test_support::reference_twin;

    #[test]
    fn array_round_trip_preserves_all_channels() {
        let s = PatientState::observe(&reference_twin());
        let arr = s.to_array();
        assert_eq!(arr.len(), 24);
        let back = PatientState::from_array(&arr).unwrap();
        assert_eq!(s, back);
        assert!(s.is_finite());
        assert!(PatientState::from_array(&arr[..20]).is_err());
    }

    #[test]
    fn channel_names_match_vector_order() {
        let mut s = PatientState::observe(&reference_twin());
        s.pao2 = 1234.5;
        let idx = CHANNELS.iter().position(|c| *c == "pao2").unwrap();
        assert_eq!(s.to_array()[idx], 1234.5);
    }
}
