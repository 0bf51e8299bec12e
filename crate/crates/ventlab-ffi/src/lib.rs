//! C ABI over the ventilation laboratory: the action codec, digital-twin
//! stepping, and policy serving behind opaque handles with status codes.
//!
//! Conventions: constructors return null on failure, every other call
//! returns `VlStatus`; details of the last failure on the calling thread are
//! available through `vl_last_error`. Raw state vectors are the 24 observed
//! channels in engineering units; policies normalize internally with the
//! statistics stored in their checkpoint.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::Array2;

use ventlab::artifact::{load_checkpoint, load_cohort, Checkpoint, PolicyKind};
use ventlab::data::{
    decode_action, encode_action, Action, ActionIndex, PatientState, N_ACTIONS, N_STATE_CHANNELS,
};
use ventlab::policy::{bcq_greedy, greedy_action};
use ventlab::sim::{initial_twin_state, step_twin, SimConfig, TwinParams, TwinState};

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Codec = 3,
    Sim = 4,
    Io = 5,
    Internal = 6,
}

fn status_of(err: &ventlab::Error) -> VlStatus {
    use ventlab::Error as E;
    match err {
        E::Codec(_) => VlStatus::Codec,
        E::Parameter(_) | E::Domain(_) | E::Numeric(_) => VlStatus::Sim,
        E::Io(_) | E::Json(_) | E::Artifact(_) => VlStatus::Io,
        E::Contract(_) | E::Config(_) | E::Data(_) => VlStatus::InvalidArgument,
    }
}

fn fail(err: &ventlab::Error) -> VlStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

/// One ventilator setting tuple in engineering units.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlAction {
    pub peep_cmh2o: f64,
    pub fio2: f64,
    pub rr_per_min: f64,
    pub ie_insp: u8,
    pub ie_exp: u8,
    pub pvent_cmh2o: f64,
}

/// Observation returned by one twin step: the 24 observed state channels
/// plus breath mechanics and the hidden injury level.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VlObservation {
    pub state: [f64; 24],
    pub pip_cmh2o: f64,
    pub peep_set_cmh2o: f64,
    pub auto_peep_cmh2o: f64,
    pub tidal_volume_ml: f64,
    pub driving_pressure_cmh2o: f64,
    pub alveolar_ventilation_l_per_min: f64,
    pub mechanical_power_proxy: f64,
    pub injury_level: f64,
}

/// Opaque: a loaded cohort of twin parameter records.
pub struct VlCohort {
    twins: Vec<TwinParams>,
    sim: SimConfig,
}

/// Opaque: one live digital twin.
pub struct VlTwin {
    state: TwinState,
    sim: SimConfig,
}

/// Opaque: a loaded policy checkpoint.
pub struct VlPolicy {
    checkpoint: Checkpoint,
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn vl_version() -> *const c_char {
    static VERSION: &[u8] = b"ventlab 0.1.0\0";
    VERSION.as_ptr().cast()
}

/// Copies the last error message on this thread into `buf` (truncating) and
/// returns the full message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (length query).
#[no_mangle]
pub unsafe extern "C" fn vl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            // Always terminate.
            *buf.add(n - 1) = 0;
        }
        bytes.len() - 1
    })
}

/// Number of cells in the discrete action grid.
#[no_mangle]
pub extern "C" fn vl_action_count() -> u32 {
    N_ACTIONS as u32
}

/// Number of observed state channels.
#[no_mangle]
pub extern "C" fn vl_state_dim() -> u32 {
    N_STATE_CHANNELS as u32
}

/// Encodes an on-grid action into its flat index.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vl_action_encode(action: *const VlAction, out_index: *mut u32) -> VlStatus {
    if action.is_null() || out_index.is_null() {
        set_last_error("null pointer");
        return VlStatus::NullPointer;
    }
    let a = &*action;
    let domain = Action {
        peep_cmh2o: a.peep_cmh2o,
        fio2: a.fio2,
        rr_per_min: a.rr_per_min,
        ie: (a.ie_insp, a.ie_exp),
        pvent_cmh2o: a.pvent_cmh2o,
    };
    match encode_action(&domain) {
        Ok(idx) => {
            *out_index = u32::from(idx.0);
            VlStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Decodes a flat index back into set-point values.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vl_action_decode(index: u32, out: *mut VlAction) -> VlStatus {
    if out.is_null() {
        set_last_error("null pointer");
        return VlStatus::NullPointer;
    }
    let idx = match ActionIndex::new(index as usize) {
        Ok(i) => i,
        Err(e) => return fail(&e),
    };
    match decode_action(idx) {
        Ok(a) => {
            *out = VlAction {
                peep_cmh2o: a.peep_cmh2o,
                fio2: a.fio2,
                rr_per_min: a.rr_per_min,
                ie_insp: a.ie.0,
                ie_exp: a.ie.1,
                pvent_cmh2o: a.pvent_cmh2o,
            };
            VlStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

unsafe fn cstr_path<'a>(path: *const c_char) -> Option<&'a Path> {
    if path.is_null() {
        return None;
    }
    CStr::from_ptr(path).to_str().ok().map(Path::new)
}

/// Loads a cohort file produced by the `spawn-cohort` pipeline stage.
/// Returns null on failure (see `vl_last_error`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vl_cohort_load(path: *const c_char) -> *mut VlCohort {
    let Some(path) = cstr_path(path) else {
        set_last_error("null or non-UTF-8 path");
        return ptr::null_mut();
    };
    match load_cohort(path) {
        Ok(file) => Box::into_raw(Box::new(VlCohort {
            twins: file.twins,
            sim: SimConfig::default(),
        })),
        Err(e) => {
            set_last_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Number of twins in a loaded cohort.
///
/// # Safety
/// `cohort` must come from `vl_cohort_load` and not be freed.
#[no_mangle]
pub unsafe extern "C" fn vl_cohort_len(cohort: *const VlCohort) -> usize {
    if cohort.is_null() {
        return 0;
    }
    (*cohort).twins.len()
}

/// # Safety
/// `cohort` must come from `vl_cohort_load`; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vl_cohort_free(cohort: *mut VlCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// Instantiates one twin at its ventilated equilibrium for the given
/// initial settings. Returns null on failure.
///
/// # Safety
/// `cohort` must be a live cohort handle.
#[no_mangle]
pub unsafe extern "C" fn vl_twin_create(
    cohort: *const VlCohort,
    twin_index: usize,
    init_action_index: u32,
) -> *mut VlTwin {
    if cohort.is_null() {
        set_last_error("null cohort");
        return ptr::null_mut();
    }
    let cohort = &*cohort;
    let Some(params) = cohort.twins.get(twin_index) else {
        set_last_error("twin index out of range");
        return ptr::null_mut();
    };
    let action = match ActionIndex::new(init_action_index as usize).and_then(decode_action) {
        Ok(a) => a,
        Err(e) => {
            set_last_error(&e.to_string());
            return ptr::null_mut();
        }
    };
    match initial_twin_state(params, &action, &cohort.sim) {
        Ok(state) => Box::into_raw(Box::new(VlTwin { state, sim: cohort.sim })),
        Err(e) => {
            set_last_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

fn observation(state: &TwinState, mech: &ventlab::sim::MechanicsObservation) -> VlObservation {
    VlObservation {
        state: PatientState::observe(state).to_array(),
        pip_cmh2o: mech.pip_cmh2o,
        peep_set_cmh2o: mech.peep_set_cmh2o,
        auto_peep_cmh2o: mech.auto_peep_cmh2o,
        tidal_volume_ml: mech.tidal_volume_ml,
        driving_pressure_cmh2o: mech.driving_pressure_cmh2o,
        alveolar_ventilation_l_per_min: mech.alveolar_ventilation_l_per_min,
        mechanical_power_proxy: mech.mechanical_power_proxy,
        injury_level: state.injury_level,
    }
}

/// Advances the twin by one decision step. Deterministic in `seed`.
///
/// # Safety
/// `twin` must be a live twin handle; `out_obs` may be null.
#[no_mangle]
pub unsafe extern "C" fn vl_twin_step(
    twin: *mut VlTwin,
    action_index: u32,
    seed: u64,
    out_obs: *mut VlObservation,
) -> VlStatus {
    if twin.is_null() {
        set_last_error("null twin");
        return VlStatus::NullPointer;
    }
    let twin = &mut *twin;
    let action = match ActionIndex::new(action_index as usize).and_then(decode_action) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    match step_twin(&twin.state, &action, seed, &twin.sim) {
        Ok((next, mech)) => {
            if !out_obs.is_null() {
                *out_obs = observation(&next, &mech);
            }
            twin.state = next;
            VlStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Writes the twin's current 24-channel observed state into `out_state`.
///
/// # Safety
/// `out_state` must point to 24 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vl_twin_observe(twin: *const VlTwin, out_state: *mut f64) -> VlStatus {
    if twin.is_null() || out_state.is_null() {
        set_last_error("null pointer");
        return VlStatus::NullPointer;
    }
    let arr = PatientState::observe(&(*twin).state).to_array();
    ptr::copy_nonoverlapping(arr.as_ptr(), out_state, N_STATE_CHANNELS);
    VlStatus::Ok
}

/// # Safety
/// `twin` must come from `vl_twin_create`; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vl_twin_free(twin: *mut VlTwin) {
    if !twin.is_null() {
        drop(Box::from_raw(twin));
    }
}

/// Loads a policy checkpoint. Returns null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vl_policy_load(path: *const c_char) -> *mut VlPolicy {
    let Some(path) = cstr_path(path) else {
        set_last_error("null or non-UTF-8 path");
        return ptr::null_mut();
    };
    match load_checkpoint(path) {
        Ok(checkpoint) => Box::into_raw(Box::new(VlPolicy { checkpoint })),
        Err(e) => {
            set_last_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// History length the policy expects.
///
/// # Safety
/// `policy` must be a live policy handle.
#[no_mangle]
pub unsafe extern "C" fn vl_policy_window_len(policy: *const VlPolicy) -> usize {
    if policy.is_null() {
        return 0;
    }
    (*policy).checkpoint.model_cfg.window
}

/// Picks the greedy action for a raw (unnormalized) state history.
///
/// `states` is row-major `rows x 24`, oldest state first, newest last. If
/// `rows` is shorter than the policy's window the history is left-padded by
/// repeating the first row.
///
/// # Safety
/// `states` must point to `rows * 24` doubles; `out_action` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vl_policy_select(
    policy: *const VlPolicy,
    states: *const f64,
    rows: usize,
    out_action: *mut u32,
) -> VlStatus {
    if policy.is_null() || states.is_null() || out_action.is_null() {
        set_last_error("null pointer");
        return VlStatus::NullPointer;
    }
    if rows == 0 {
        set_last_error("empty history");
        return VlStatus::InvalidArgument;
    }
    let ck = &(*policy).checkpoint;
    let l = ck.model_cfg.window;
    let raw = std::slice::from_raw_parts(states, rows * N_STATE_CHANNELS);
    let result = catch_unwind(AssertUnwindSafe(|| {
        let window = Array2::from_shape_fn((l, N_STATE_CHANNELS), |(j, c)| {
            // Window ends at the newest provided row.
            let src = (rows + j).saturating_sub(l).min(rows - 1);
            let x = raw[src * N_STATE_CHANNELS + c];
            (x - ck.norm_stats.mean[c]) / ck.norm_stats.std[c]
        });
        match (&ck.kind, &ck.behavior) {
            (PolicyKind::Bcq { threshold }, Some(behavior)) => {
                bcq_greedy(&ck.params, behavior, window.view(), *threshold)
            }
            _ => greedy_action(&ck.params, window.view()),
        }
    }));
    match result {
        Ok(Ok(action)) => {
            *out_action = u32::from(action.0);
            VlStatus::Ok
        }
        Ok(Err(e)) => fail(&e),
        Err(_) => {
            set_last_error("panic during policy evaluation");
            VlStatus::Internal
        }
    }
}

/// # Safety
/// `policy` must come from `vl_policy_load`; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vl_policy_free(policy: *mut VlPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}
