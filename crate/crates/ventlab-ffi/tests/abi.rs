//! Exercises the C ABI end to end: codec, twin stepping, policy serving,
//! and error reporting, all through the exported extern "C" surface.

use std::ffi::CString;
use std::path::Path;

use tempfile::tempdir;
use ventlab_ffi::*;

use ventlab::artifact::{save_checkpoint, save_cohort, Checkpoint, PolicyKind};
use ventlab::data::{generate_dataset, make_windows, DatasetConfig, Episode, N_STATE_CHANNELS};
use ventlab::net::ModelConfig;
use ventlab::sim::{spawn_cohort, CohortRanges, SimConfig};
use ventlab::tcql::{train, TargetPolicy, TrainConfig};

fn make_cohort_file(dir: &Path, n: usize) -> CString {
    let ranges = CohortRanges::default();
    let cohort = spawn_cohort(n, 3, &ranges).unwrap();
    let path = dir.join("cohort.json");
    save_cohort(&path, &cohort, 3, &ranges).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { vl_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|c| *c as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn action_codec_round_trips_through_the_abi() {
    assert_eq!(vl_action_count(), 13_440);
    assert_eq!(vl_state_dim(), 24);
    for index in [0u32, 7, 1234, 13_439] {
        let mut action = VlAction {
            peep_cmh2o: 0.0,
            fio2: 0.0,
            rr_per_min: 0.0,
            ie_insp: 0,
            ie_exp: 0,
            pvent_cmh2o: 0.0,
        };
        let st = unsafe { vl_action_decode(index, &mut action) };
        assert_eq!(st, VlStatus::Ok);
        let mut back = u32::MAX;
        let st = unsafe { vl_action_encode(&action, &mut back) };
        assert_eq!(st, VlStatus::Ok);
        assert_eq!(back, index);
    }
    // Out-of-range index and off-grid value produce codec errors.
    let mut action = VlAction {
        peep_cmh2o: 6.5,
        fio2: 0.4,
        rr_per_min: 14.0,
        ie_insp: 1,
        ie_exp: 2,
        pvent_cmh2o: 12.0,
    };
    let mut out = 0u32;
    assert_eq!(unsafe { vl_action_decode(13_440, std::ptr::null_mut()) }, VlStatus::NullPointer);
    assert_eq!(unsafe { vl_action_encode(&action, &mut out) }, VlStatus::Codec);
    assert!(last_error().contains("off-grid"), "{}", last_error());
    action.peep_cmh2o = 5.0;
    assert_eq!(unsafe { vl_action_encode(&action, &mut out) }, VlStatus::Ok);
}

#[test]
fn cohort_and_twin_lifecycle_is_deterministic() {
    let dir = tempdir().unwrap();
    let path = make_cohort_file(dir.path(), 4);
    unsafe {
        let cohort = vl_cohort_load(path.as_ptr());
        assert!(!cohort.is_null(), "{}", last_error());
        assert_eq!(vl_cohort_len(cohort), 4);

        let init = 1234u32;
        let twin_a = vl_twin_create(cohort, 1, init);
        let twin_b = vl_twin_create(cohort, 1, init);
        assert!(!twin_a.is_null() && !twin_b.is_null());

        let mut obs_a = std::mem::zeroed::<VlObservation>();
        let mut obs_b = std::mem::zeroed::<VlObservation>();
        for step in 0..5u64 {
            assert_eq!(vl_twin_step(twin_a, 2048, step, &mut obs_a), VlStatus::Ok);
            assert_eq!(vl_twin_step(twin_b, 2048, step, &mut obs_b), VlStatus::Ok);
            assert_eq!(obs_a, obs_b, "same seeds must give identical trajectories");
            assert_eq!(
                obs_a.driving_pressure_cmh2o,
                obs_a.pip_cmh2o - obs_a.peep_set_cmh2o
            );
        }
        let mut state = [0.0f64; 24];
        assert_eq!(vl_twin_observe(twin_a, state.as_mut_ptr()), VlStatus::Ok);
        assert!(state.iter().all(|v| v.is_finite()));

        // Error paths.
        assert!(vl_twin_create(cohort, 99, init).is_null());
        assert!(last_error().contains("out of range"));
        assert_eq!(vl_twin_step(twin_a, 999_999, 0, &mut obs_a), VlStatus::Codec);

        vl_twin_free(twin_a);
        vl_twin_free(twin_b);
        vl_cohort_free(cohort);
    }
}

#[test]
fn policy_serving_matches_the_rust_side() {
    let dir = tempdir().unwrap();
    // Train a tiny policy.
    let model_cfg = ModelConfig {
        state_dim: N_STATE_CHANNELS,
        hidden: 8,
        window: 3,
        n_layers: 1,
        n_heads: 2,
        ff_hidden: 8,
        mlp_hidden: 8,
        n_actions: ventlab::data::N_ACTIONS,
        use_positional: true,
    };
    let cohort = spawn_cohort(2, 3, &CohortRanges::default()).unwrap();
    let dcfg = DatasetConfig { episodes_per_twin: 2, horizon: 5, ..DatasetConfig::default() };
    let set = generate_dataset(&cohort, &dcfg, &SimConfig::default(), 8).unwrap();
    let refs: Vec<&Episode> = set.episodes.iter().collect();
    let windows = make_windows(&refs, 3, &set.norm_stats).unwrap();
    let tcfg = TrainConfig { total_steps: 5, batch_size: 4, seed: 1, ..TrainConfig::default() };
    let out = train(&windows, &model_cfg, &tcfg, &TargetPolicy::DoubleQ).unwrap();
    let ck = Checkpoint {
        kind: PolicyKind::TCql,
        model_cfg,
        train_cfg: tcfg,
        seed: 1,
        steps: 5,
        params: out.params.clone(),
        target_params: out.target_params,
        opt_state: out.opt_state,
        behavior: None,
        norm_stats: set.norm_stats.clone(),
        reward_norms: set.reward_norms,
    };
    let ck_path = dir.path().join("policy.ckpt");
    save_checkpoint(&ck_path, &ck).unwrap();

    // Raw (unnormalized) 2-row history; the ABI pads and normalizes.
    let raw: Vec<f64> = set.episodes[0].states[0]
        .to_array()
        .iter()
        .chain(set.episodes[0].states[1].to_array().iter())
        .copied()
        .collect();

    let cpath = CString::new(ck_path.to_str().unwrap()).unwrap();
    unsafe {
        let policy = vl_policy_load(cpath.as_ptr());
        assert!(!policy.is_null(), "{}", last_error());
        assert_eq!(vl_policy_window_len(policy), 3);
        let mut action = u32::MAX;
        let st = vl_policy_select(policy, raw.as_ptr(), 2, &mut action);
        assert_eq!(st, VlStatus::Ok, "{}", last_error());
        assert!(action < 13_440);

        // Rust-side reference: same padding and normalization by hand.
        let mut window = ndarray::Array2::<f64>::zeros((3, N_STATE_CHANNELS));
        let rows = [0usize, 0, 1];
        for (j, r) in rows.iter().enumerate() {
            let arr = set.episodes[0].states[*r].to_array();
            for c in 0..N_STATE_CHANNELS {
                window[[j, c]] = (arr[c] - set.norm_stats.mean[c]) / set.norm_stats.std[c];
            }
        }
        let expect = ventlab::policy::greedy_action(&out.params, window.view()).unwrap();
        assert_eq!(action, u32::from(expect.0));
        vl_policy_free(policy);
    }
}

#[test]
fn generated_header_exports_the_full_surface() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/ventlab.h"
    ))
    .expect("cbindgen header present");
    for symbol in [
        "vl_version",
        "vl_last_error",
        "vl_action_count",
        "vl_action_encode",
        "vl_action_decode",
        "vl_cohort_load",
        "vl_cohort_len",
        "vl_cohort_free",
        "vl_twin_create",
        "vl_twin_step",
        "vl_twin_observe",
        "vl_twin_free",
        "vl_policy_load",
        "vl_policy_window_len",
        "vl_policy_select",
        "vl_policy_free",
        "typedef struct VlCohort VlCohort",
        "typedef struct VlTwin VlTwin",
        "typedef struct VlPolicy VlPolicy",
        "VL_STATUS_OK",
    ] {
        assert!(header.contains(symbol), "header missing {symbol}");
    }
}
