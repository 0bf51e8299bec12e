//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers. Heavy artifacts (the desk-scale cohort, dataset,
//! and trained policies) are built once and shared.

mod acceptance_support;

use acceptance_support as support;

use ndarray::{arr1, Array2, Array3};
use rand::Rng;
use std::sync::LazyLock;
use ventlab::data::{
    decode_action, encode_action, ActionBins, ActionIndex, N_ACTIONS,
};
use ventlab::net::{forward_batch, grad_check, ModelConfig, ParamVec};
use ventlab::policy::argmax;
use ventlab::rng::{derive_seed, rng_from};
use ventlab::sim::{
    breath_pressures_closed_form, breath_pressures_iterative, breath_timings, o2_content,
    paco2_target, simulate_breath_mechanics, spawn_cohort, CohortRanges, SimConfig,
};
use ventlab::tcql::{
    adaptive_coeff, component_grads, cql_term, loss_frozen, BatchArrays, TargetPolicy, TrainConfig,
};

static DESK: LazyLock<support::DeskArtifacts> = LazyLock::new(support::build_desk);

fn probe_model() -> ModelConfig {
    ModelConfig {
        state_dim: 6,
        hidden: 8,
        window: 4,
        n_layers: 2,
        n_heads: 2,
        ff_hidden: 12,
        mlp_hidden: 10,
        n_actions: 11,
        use_positional: true,
    }
}

fn random_batch(cfg: &ModelConfig, b: usize, seed: u64) -> BatchArrays {
    let mut rng = rng_from(seed);
    BatchArrays {
        states: Array3::from_shape_fn((b, cfg.window, cfg.state_dim), |_| rng.gen_range(-1.0..1.0)),
        next_states: Array3::from_shape_fn((b, cfg.window, cfg.state_dim), |_| {
            rng.gen_range(-1.0..1.0)
        }),
        actions: (0..b).map(|_| rng.gen_range(0..cfg.n_actions)).collect(),
        rewards: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        terminals: (0..b).map(|i| i % 4 == 0).collect(),
    }
}

/// Criterion 1: finite-difference gradient contract for the total loss and
/// each component in isolation, max relative error < 1e-4 on >= 5 draws.
#[test]
fn criterion_01_gradient_contract() {
    let cfg = probe_model();
    let tc = TrainConfig {
        alpha0: 1.3,
        beta: 0.8,
        tau_cql: 0.7,
        lambda_sc: 0.25,
        ..TrainConfig::default()
    };
    let mut worst_total = 0.0f64;
    let mut worst_component = 0.0f64;
    for draw in 0..5u64 {
        let params = ParamVec::init(&cfg, derive_seed(90, "params", &[draw]));
        let target = ParamVec::init(&cfg, derive_seed(90, "target", &[draw]));
        let batch = random_batch(&cfg, 4, derive_seed(90, "batch", &[draw]));
        let (_, comps, frozen) =
            component_grads(&batch, &params, &target, &tc, &TargetPolicy::DoubleQ).unwrap();

        // Total loss.
        let report = grad_check(
            &params,
            &comps.total().unwrap(),
            |p| Ok(loss_frozen(&batch, p, &tc, &frozen)?.total),
            1e-5,
            0.35,
            derive_seed(90, "coords", &[draw]),
        )
        .unwrap();
        worst_total = worst_total.max(report.max_rel_err);

        // Each component in isolation.
        for (name, grads, reader) in [
            ("td", &comps.td, &(|b: ventlab::tcql::LossBreakdown| b.td) as &dyn Fn(_) -> f64),
            ("cql", &comps.cql, &|b: ventlab::tcql::LossBreakdown| b.cql_weighted),
            ("sc", &comps.sc, &|b: ventlab::tcql::LossBreakdown| tc.lambda_sc * b.sc),
        ] {
            let report = grad_check(
                &params,
                grads,
                |p| Ok(reader(loss_frozen(&batch, p, &tc, &frozen)?)),
                1e-5,
                0.35,
                derive_seed(91, name, &[draw]),
            )
            .unwrap();
            worst_component = worst_component.max(report.max_rel_err);
        }
    }
    assert!(worst_total < 1e-4, "total-loss gradient error {worst_total}");
    assert!(worst_component < 1e-4, "component gradient error {worst_component}");
    println!(
        "ACCEPTANCE 01 PASS gradient contract: max rel err total {worst_total:.2e}, components {worst_component:.2e} (< 1e-4)"
    );
}

/// Criterion 2: penalty non-negativity on 10k random q-vectors and the
/// tau -> 0 limit when the data action is the argmax.
#[test]
fn criterion_02_cql_term_non_negative_and_limit() {
    let mut rng = rng_from(7);
    let mut min_seen = f64::INFINITY;
    for _ in 0..10_000 {
        let dim = rng.gen_range(2..128usize);
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let a = rng.gen_range(0..dim);
        let tau = rng.gen_range(0.01..5.0);
        let ell = cql_term(arr1(&q).view(), a, tau);
        min_seen = min_seen.min(ell);
        assert!(ell >= 0.0, "penalty {ell} < 0 for dim {dim}, tau {tau}");
    }
    let mut worst_limit = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = rng_from(derive_seed(8, "limit", &[trial]));
        let q: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let arr = arr1(&q);
        let a = argmax(arr.view());
        let ell = cql_term(arr.view(), a, 1e-3);
        worst_limit = worst_limit.max(ell);
    }
    assert!(
        worst_limit <= 1e-3,
        "penalty at the argmax did not vanish as tau -> 1e-3: {worst_limit}"
    );
    println!(
        "ACCEPTANCE 02 PASS cql term: min over 10k draws {min_seen:.3e} >= 0; argmax limit {worst_limit:.2e} <= 1e-3"
    );
}

/// Criterion 3: degeneration equivalences against independently coded
/// fixed-alpha CQL (1e-10) and a hand double-DQN oracle (1e-12).
#[test]
fn criterion_03_degeneration_equivalences() {
    let cfg = probe_model();

    // (beta = 0, lambda_sc = 0) vs an independent fixed-alpha CQL sum.
    let tc = TrainConfig { alpha0: 0.9, beta: 0.0, lambda_sc: 0.0, ..TrainConfig::default() };
    let mut max_diff_cql = 0.0f64;
    for draw in 0..5u64 {
        let params = ParamVec::init(&cfg, derive_seed(30, "p", &[draw]));
        let target = ParamVec::init(&cfg, derive_seed(30, "t", &[draw]));
        let batch = random_batch(&cfg, 6, derive_seed(30, "b", &[draw]));
        let (bd, _, frozen) =
            component_grads(&batch, &params, &target, &tc, &TargetPolicy::DoubleQ).unwrap();
        // Independent route: explicit log-sum-exp and squared error sums
        // straight from the q matrices.
        let q = forward_batch(&params, batch.states.view(), false).unwrap().q;
        let b = batch.len() as f64;
        let mut td = 0.0;
        let mut cql = 0.0;
        for i in 0..batch.len() {
            let row = q.row(i);
            let err = row[batch.actions[i]] - frozen.targets[i];
            td += err * err / b;
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            cql += 0.9 * (lse - row[batch.actions[i]]) / b;
        }
        let reference = td + cql;
        max_diff_cql = max_diff_cql.max((bd.total - reference).abs());
        assert!(
            (bd.coeff_mean - 0.9).abs() < 1e-15,
            "beta=0 coefficient must be exactly alpha0"
        );
    }
    assert!(max_diff_cql < 1e-10, "fixed-alpha mismatch {max_diff_cql}");

    // (alpha0 = 0, lambda_sc = 0) vs a hand double-DQN oracle on 2-action
    // q-tables read out of the networks.
    let mut cfg2 = cfg;
    cfg2.n_actions = 2;
    let tc2 = TrainConfig { alpha0: 0.0, lambda_sc: 0.0, gamma: 0.9, ..TrainConfig::default() };
    let mut max_diff_td = 0.0f64;
    for draw in 0..5u64 {
        let params = ParamVec::init(&cfg2, derive_seed(31, "p", &[draw]));
        let target = ParamVec::init(&cfg2, derive_seed(31, "t", &[draw]));
        let batch = random_batch(&cfg2, 6, derive_seed(31, "b", &[draw]));
        let (bd, _, _) =
            component_grads(&batch, &params, &target, &tc2, &TargetPolicy::DoubleQ).unwrap();
        let q_s = forward_batch(&params, batch.states.view(), false).unwrap().q;
        let q_next_online = forward_batch(&params, batch.next_states.view(), false).unwrap().q;
        let q_next_target = forward_batch(&target, batch.next_states.view(), false).unwrap().q;
        let mut reference = 0.0;
        for i in 0..batch.len() {
            let y = if batch.terminals[i] {
                batch.rewards[i]
            } else {
                // Hand rule: argmax under the online table, value under the
                // target table.
                let a_star = if q_next_online[[i, 0]] >= q_next_online[[i, 1]] { 0 } else { 1 };
                batch.rewards[i] + 0.9 * q_next_target[[i, a_star]]
            };
            let err = q_s[[i, batch.actions[i]]] - y;
            reference += err * err / batch.len() as f64;
        }
        max_diff_td = max_diff_td.max((bd.total - reference).abs());
    }
    assert!(max_diff_td < 1e-12, "double-DQN mismatch {max_diff_td}");

    // Literal hand table: r=0, gamma=0.9, target values (0.5, 0.2), online
    // argmax action 0 -> y = 0.45.
    let y = 0.0 + 0.9 * [0.5, 0.2][argmax(arr1(&[1.0, 0.3]).view())];
    assert!((y - 0.45).abs() < 1e-15);

    println!(
        "ACCEPTANCE 03 PASS degenerations: fixed-alpha diff {max_diff_cql:.2e} < 1e-10, double-DQN diff {max_diff_td:.2e} < 1e-12"
    );
}

/// Criterion 4: adaptive coefficient anchors and strict monotonicity.
#[test]
fn criterion_04_adaptive_coefficient() {
    for alpha0 in [0.25, 1.0, 3.5] {
        assert_eq!(adaptive_coeff(0.0, alpha0, 1.7), alpha0, "alpha(0) must be alpha0 exactly");
    }
    let mut last = f64::NEG_INFINITY;
    for i in 0..100 {
        let u = 0.07 * f64::from(i);
        let a = adaptive_coeff(u, 1.0, 0.9);
        assert!(a > last, "coefficient must increase strictly in u");
        last = a;
    }
    println!("ACCEPTANCE 04 PASS adaptive coefficient: alpha(0) = alpha0 exactly; strictly increasing over a 100-point u grid");
}

/// Criterion 6: breath fixed point closed form vs iteration over the whole
/// action grid on 100 twins; steady-state O2 mass balance; monotonicity
/// suites with zero violations.
#[test]
fn criterion_06_simulator_physics() {
    let cohort = spawn_cohort(100, 606, &CohortRanges::default()).unwrap();
    let sim = SimConfig::default();

    // Closed form vs iteration across all 13,440 actions on every twin.
    let mut max_gap = 0.0f64;
    for params in &cohort {
        let twin = ventlab::sim::initial_twin_state(
            params,
            &ActionBins::new(0, 1, 2, 2, 3).unwrap().action(),
            &sim,
        )
        .unwrap();
        let rc = params.resistance_cmh2o_s_per_l * twin.effective_compliance_ml_per_cmh2o / 1000.0;
        for index in 0..N_ACTIONS {
            let action = decode_action(ActionIndex::new(index).unwrap()).unwrap();
            let timings = breath_timings(&action);
            let pip = action.pip_cmh2o();
            let cf = breath_pressures_closed_form(pip, action.peep_cmh2o, timings, rc);
            let it =
                breath_pressures_iterative(pip, action.peep_cmh2o, timings, rc, 1e-13, 100_000);
            max_gap = max_gap.max((cf.0 - it.0).abs().max((cf.1 - it.1).abs()));
        }
    }
    assert!(max_gap <= 1e-9, "closed form vs iteration gap {max_gap}");

    // O2 mass balance at steady state: infer venous content from the shunt
    // mixing identity and check the Fick flux against VO2 within 2%.
    let benign = ActionBins::new(1, 2, 2, 2, 3).unwrap().action();
    let mut worst_balance = 0.0f64;
    for params in cohort.iter().take(20) {
        let mut p = params.clone();
        p.noise_std = ventlab::sim::ChannelNoise::zero();
        let mut twin = ventlab::sim::initial_twin_state(&p, &benign, &sim).unwrap();
        for t in 0..50 {
            let (next, _) = ventlab::sim::step_twin(&twin, &benign, t, &sim).unwrap();
            twin = next;
        }
        let mech = simulate_breath_mechanics(&twin, &benign).unwrap();
        let targets = ventlab::sim::gas_exchange_targets(&ventlab::sim::GasExchangeInputs {
            hb_g_per_dl: p.hemoglobin_g_per_dl,
            vo2_l_per_min: p.vo2_l_per_min,
            vco2_l_per_min: p.vco2_l_per_min,
            cardiac_output_l_per_min: p.cardiac_output_l_per_min,
            shunt_fraction: twin.effective_shunt_fraction,
            va_l_per_min: mech.alveolar_ventilation_l_per_min,
            fio2: benign.fio2,
        })
        .unwrap();
        assert!(!targets.clamped, "benign settings must not clamp the solver");
        // Steady state reached?
        assert!(
            (twin.blood_gas.pao2_mmhg - targets.pao2_mmhg).abs() < 1e-6,
            "blood gas failed to converge"
        );
        let qs = twin.effective_shunt_fraction;
        let ca = o2_content(p.hemoglobin_g_per_dl, twin.blood_gas.pao2_mmhg);
        let cc = o2_content(p.hemoglobin_g_per_dl, targets.alveolar_po2_mmhg);
        // Invert the mixing identity Ca = (1-Qs)Cc + Qs*Cv for Cv.
        let cv = (ca - (1.0 - qs) * cc) / qs;
        let flux_ml_per_min = p.cardiac_output_l_per_min * 10.0 * (ca - cv);
        let vo2_ml_per_min = 1000.0 * p.vo2_l_per_min;
        let rel = (flux_ml_per_min - vo2_ml_per_min).abs() / vo2_ml_per_min;
        worst_balance = worst_balance.max(rel);
    }
    assert!(worst_balance <= 0.02, "O2 mass balance off by {worst_balance}");

    // Monotonicity suites, zero violations.
    // PaCO2 strictly decreasing in VA.
    let mut last = f64::INFINITY;
    for i in 1..=200 {
        let va = 0.1 * f64::from(i);
        let p = paco2_target(0.2, va);
        if last < 130.0 {
            assert!(p < last, "PaCO2 target must fall strictly as VA rises");
        }
        last = p;
    }
    // VT non-decreasing in Pvent and PaO2 non-decreasing in FiO2, per twin.
    for params in cohort.iter().take(100) {
        let mut p = params.clone();
        p.noise_std = ventlab::sim::ChannelNoise::zero();
        let twin = ventlab::sim::initial_twin_state(&p, &benign, &sim).unwrap();
        let mut last_vt = -1.0;
        for pvent in 0..8 {
            let a = ActionBins::new(1, 2, 2, 2, pvent).unwrap().action();
            let mech = simulate_breath_mechanics(&twin, &a).unwrap();
            assert!(mech.tidal_volume_ml >= last_vt, "VT must not fall as Pvent rises");
            last_vt = mech.tidal_volume_ml;
        }
        let mut last_pao2 = -1.0;
        for fio2 in 0..8 {
            let a = ActionBins::new(1, fio2, 2, 2, 3).unwrap().action();
            let (next, _) = ventlab::sim::step_twin(&twin, &a, 5, &sim).unwrap();
            assert!(
                next.blood_gas.pao2_mmhg >= last_pao2,
                "PaO2 must not fall as FiO2 rises"
            );
            last_pao2 = next.blood_gas.pao2_mmhg;
        }
    }
    println!(
        "ACCEPTANCE 06 PASS simulator physics: fixed-point gap {max_gap:.2e} <= 1e-9 over 1.344M solves, O2 balance {worst_balance:.4} <= 0.02, monotonicity suites clean"
    );
}

/// Criterion 7: exhaustive codec round-trip and reward bounds on every
/// generated transition.
#[test]
fn criterion_07_codec_and_reward_bounds() {
    for i in 0..N_ACTIONS {
        let idx = ActionIndex::new(i).unwrap();
        let back = encode_action(&decode_action(idx).unwrap()).unwrap();
        assert_eq!(idx, back, "codec round trip failed at {i}");
    }
    let desk = &*DESK;
    let mut checked = 0usize;
    for ep in &desk.set.episodes {
        for t in 0..ep.len() {
            let tr = ep.transition(t);
            assert!(tr.reward.abs() <= 1.0, "|r| > 1 at episode {} step {t}", ep.episode_id);
            if tr.terminal {
                assert!(
                    tr.reward == 1.0 || tr.reward == -1.0,
                    "terminal reward {} not in {{-1, +1}}",
                    tr.reward
                );
            }
            checked += 1;
        }
    }
    println!(
        "ACCEPTANCE 07 PASS codec and rewards: 13,440-cell round trip exact; {checked} transitions all within bounds"
    );
}

/// Criterion 8: scripted-clinician cohort predicted mortality within
/// 0.27 +/- 0.05 after injury-weight calibration.
#[test]
fn criterion_08_behavior_cohort_calibration() {
    let desk = &*DESK;
    let n = desk.set.episodes.len() as f64;
    let mean_p: f64 = desk.set.episodes.iter().map(|e| e.p_death).sum::<f64>() / n;
    assert!(
        (0.22..=0.32).contains(&mean_p),
        "cohort predicted mortality {mean_p} outside 0.27 +/- 0.05"
    );
    println!(
        "ACCEPTANCE 08 PASS behavior-cohort calibration: mean predicted mortality {mean_p:.4} within 0.27 +/- 0.05"
    );
}

/// Criterion 11: the end-to-end pipeline replays byte-identically from its
/// recorded configuration and manifests.
#[test]
fn criterion_11_pipeline_determinism() {
    use std::fs;
    let text = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/smoke.toml"
    ))
    .unwrap();
    let cfg = ventlab::pipeline::RunConfig::from_toml(&text).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    ventlab::pipeline::run_all_cmd(&cfg, dir_a.path()).unwrap();
    ventlab::pipeline::run_all_cmd(&cfg, dir_b.path()).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n.ends_with(".ckpt")));
    for name in &names {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
    }
    println!(
        "ACCEPTANCE 11 PASS determinism: {} pipeline artifacts byte-identical across reruns",
        names.len()
    );
}

/// Criterion 5: FQE matches exact linear-solve policy evaluation within
/// 1e-2 on 10 random 3-state/2-action MDPs at gamma = 0.9.
#[test]
fn criterion_05_fqe_oracle_equivalence() {
    let worst = support::fqe_tiny_mdp_worst_error(10);
    assert!(worst <= 1e-2, "FQE vs exact policy evaluation gap {worst}");
    println!(
        "ACCEPTANCE 05 PASS fqe oracle: max |Q_fqe - Q_exact| {worst:.4} <= 1e-2 over 10 random MDPs"
    );
}

/// Criterion 9: after the desk-scale run, DDQN's mean OOD initial Q exceeds
/// every support-constrained method's, and T-CQL stays at or below the
/// max-return threshold 1 in at least 4 of 5 seeds.
#[test]
fn criterion_09_ood_directional() {
    let desk = &*DESK;
    let ddqn = desk.ddqn_ood_q;
    let tcql_mean = desk.tcql_ood_q.iter().sum::<f64>() / desk.tcql_ood_q.len() as f64;
    assert!(
        ddqn > tcql_mean,
        "DDQN OOD mean {ddqn} must exceed T-CQL {tcql_mean}"
    );
    assert!(
        ddqn > desk.cql_fixed_ood_q,
        "DDQN OOD mean {ddqn} must exceed fixed-alpha CQL {}",
        desk.cql_fixed_ood_q
    );
    assert!(
        ddqn > desk.bcq_ood_q,
        "DDQN OOD mean {ddqn} must exceed BCQ {}",
        desk.bcq_ood_q
    );
    let under = desk.tcql_ood_q.iter().filter(|q| **q <= 1.0).count();
    assert!(
        under >= 4,
        "T-CQL OOD mean exceeded the threshold 1 in {} of 5 seeds: {:?}",
        5 - under,
        desk.tcql_ood_q
    );
    println!(
        "ACCEPTANCE 09 PASS ood direction: DDQN {ddqn:.3} > T-CQL {tcql_mean:.3} (per-seed {:?}), CQL {:.3}, BCQ {:.3}; {under}/5 T-CQL seeds <= 1",
        desk.tcql_ood_q, desk.cql_fixed_ood_q, desk.bcq_ood_q
    );
}

/// Criterion 10: T-CQL's safety-constraint rate is at least DDQN's across
/// the 5-seed online evaluation, and the report carries exactly 5 seeds.
#[test]
fn criterion_10_safety_directional() {
    let desk = &*DESK;
    let tcql = &desk.online_tcql;
    let ddqn = &desk.online_ddqn;
    assert_eq!(tcql.per_seed.len(), 5, "report must aggregate exactly 5 seeds");
    assert_eq!(ddqn.per_seed.len(), 5);
    assert!(
        tcql.safety_rate_pct.mean >= ddqn.safety_rate_pct.mean,
        "T-CQL safety {} < DDQN safety {}",
        tcql.safety_rate_pct.mean,
        ddqn.safety_rate_pct.mean
    );
    println!(
        "ACCEPTANCE 10 PASS safety direction: T-CQL {:.2}% +/- {:.2} >= DDQN {:.2}% +/- {:.2} over exactly 5 seeds",
        tcql.safety_rate_pct.mean,
        tcql.safety_rate_pct.std,
        ddqn.safety_rate_pct.mean,
        ddqn.safety_rate_pct.std
    );
}

/// Criterion 12: trained T-CQL's correlation between per-episode expected
/// return and predicted mortality is negative with p < 0.05.
#[test]
fn criterion_12_return_mortality_correlation() {
    let desk = &*DESK;
    assert!(
        desk.correlation_r < 0.0,
        "expected negative correlation, got r = {}",
        desk.correlation_r
    );
    assert!(
        desk.correlation_p < 0.05,
        "correlation not significant: p = {}",
        desk.correlation_p
    );
    println!(
        "ACCEPTANCE 12 PASS correlation: r = {:.3} < 0 with p = {:.2e} < 0.05 over {} test episodes",
        desk.correlation_r, desk.correlation_p, desk.n_test_episodes
    );
}
