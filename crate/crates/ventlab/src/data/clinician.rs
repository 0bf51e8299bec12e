//! Scripted guideline-following behavior policy.
//!
//! A simple bedside ladder: oxygenation drives FiO2/PEEP up or down, PaCO2
//! steers the rate, and tidal volume per kg steers the pressure-support
//! level. With probability `eps` one randomly chosen dimension drifts to an
//! adjacent bin, which is what puts off-ladder actions into the dataset.

use rand::Rng;

use crate::data::action::{ActionBins, ActionIndex, N_FIO2, N_IE, N_PEEP, N_PVENT, N_RR};
use crate::data::state::PatientState;
use crate::sim::MechanicsObservation;

const SPO2_LOW: f64 = 0.92;
const SPO2_HIGH: f64 = 0.97;
const PACO2_LOW: f64 = 35.0;
const PACO2_HIGH: f64 = 45.0;
const VT_PER_KG_LOW: f64 = 6.0;
const VT_PER_KG_HIGH: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct ScriptedClinician {
    current: ActionBins,
    eps: f64,
}

impl ScriptedClinician {
    pub fn new(initial: ActionBins, eps: f64) -> Self {
        ScriptedClinician { current: initial, eps }
    }

    pub fn current_bins(&self) -> ActionBins {
        self.current
    }

    /// The deterministic ladder step (no exploration).
    fn ladder(&self, s: &PatientState, mech: Option<&MechanicsObservation>) -> ActionBins {
        let mut b = self.current;
        if s.spo2 < SPO2_LOW {
            b.fio2 = (b.fio2 + 1).min(N_FIO2 - 1);
            b.peep = (b.peep + 1).min(N_PEEP - 1);
        } else if s.spo2 > SPO2_HIGH {
            b.fio2 = b.fio2.saturating_sub(1);
            b.peep = b.peep.saturating_sub(1);
        }
        if s.paco2 > PACO2_HIGH {
            b.rr = (b.rr + 1).min(N_RR - 1);
        } else if s.paco2 < PACO2_LOW {
            b.rr = b.rr.saturating_sub(1);
        }
        if let Some(m) = mech {
            let vt_per_kg = m.tidal_volume_ml / s.weight;
            if vt_per_kg > VT_PER_KG_HIGH {
                b.pvent = b.pvent.saturating_sub(1);
            } else if vt_per_kg < VT_PER_KG_LOW {
                b.pvent = (b.pvent + 1).min(N_PVENT - 1);
            }
        }
        b
    }

    /// Picks the next action and remembers it as the new current setting.
    ///
    /// `mech` is the mechanics of the previous step; `None` on the first
    /// decision of an episode.
    pub fn decide(
        &mut self,
        s: &PatientState,
        mech: Option<&MechanicsObservation>,
        rng: &mut impl Rng,
    ) -> ActionIndex {
        let mut b = self.ladder(s, mech);
        if self.eps > 0.0 && rng.gen::<f64>() < self.eps {
            let dim = rng.gen_range(0usize..5);
            let (idx, len): (&mut usize, usize) = match dim {
                0 => (&mut b.peep, N_PEEP),
                1 => (&mut b.fio2, N_FIO2),
                2 => (&mut b.rr, N_RR),
                3 => (&mut b.ie, N_IE),
                _ => (&mut b.pvent, N_PVENT),
            };
            *idx = if *idx == 0 {
                1
            } else if *idx == len - 1 {
                len - 2
            } else if rng.gen_bool(0.5) {
                *idx + 1
            } else {
                *idx - 1
            };
        }
        self.current = b;
        // Bin arithmetic keeps indices in range by construction.
        b.encode().expect("ladder produced an on-grid action")
    }
}
