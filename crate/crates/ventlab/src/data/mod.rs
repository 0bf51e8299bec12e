//! Offline dataset construction: observed states, the action codec, rewards,
//! severity scoring, the scripted behavior policy, imputation, sequence
//! windows, and the train/test split.

mod action;
mod apache;
mod clinician;
mod episode;
mod impute;
mod reward;
mod state;
mod window;

pub use action::{
    decode_action, encode_action, Action, ActionBins, ActionIndex, FIO2_GRID, IE_GRID, N_ACTIONS,
    N_FIO2, N_IE, N_PEEP, N_PVENT, N_RR, PEEP_GRID, PVENT_GRID, RR_GRID,
};
pub use apache::{apache2_score, predicted_mortality};
pub use clinician::ScriptedClinician;
pub use episode::{
    attach_rewards, generate_dataset, generate_episodes, DatasetConfig, Episode, EpisodeSet,
    MortalityModel, Transition,
};
pub use impute::{impute_missing, MaskedSeries, N_CHANNELS as N_IMPUTE_CHANNELS};
pub use reward::{compute_reward, RewardNorms};
pub use state::{PatientState, CHANNELS, N_STATE_CHANNELS};
pub use window::{make_windows, split_dataset, NormStats, WindowSet};
