//! Mechanistic digital-twin simulator.
//!
//! Each twin is a single-compartment RC lung coupled to steady-state gas
//! exchange with shunt mixing, a cumulative barotrauma/volutrauma injury
//! state, and mean-reverting vitals and labs. Stepping is pure-functional:
//! `step_twin` maps (state, action, seed) to the next state, so a cohort can
//! be advanced in parallel with bit-reproducible results.

mod cohort;
mod gas;
mod injury;
mod mechanics;
mod step;
pub mod test_support;
mod types;

pub use cohort::{spawn_cohort, CohortRanges, Dist, Range};
pub use gas::{
    gas_exchange_step, gas_exchange_targets, o2_content, o2_saturation, paco2_target,
    pao2_from_content, GasExchangeInputs, GasTargets,
};
pub use injury::{injury_update, peep_recruitment, InjuryParams};
pub use mechanics::{
    breath_pressures_closed_form, breath_pressures_iterative, breath_timings,
    simulate_breath_mechanics, BreathTimings,
};
pub use step::{initial_twin_state, step_twin, SimConfig};
pub use types::{
    Baselines, BloodGas, ChannelNoise, Labs, MechanicsObservation, Sex, TwinParams, TwinState,
    Vitals,
};
