use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xsrl_autodiff::ParamSet;
use xsrl_core::checkpoint::Container;
use xsrl_core::intrinsic::{policy_to_reset, reset_score, reward_lpb, IntrinsicWeights, RewardSample};
use xsrl_core::trainer::{load_model, read_metrics, run_pretraining, LossGraph, RunPaths, Schedule, Trainer};
use xsrl_core::transfer::Encoder;
use xsrl_core::{Ablation, EncoderKind, EnvKind, NetConfig, RunConfig, XsrlError};

fn small_nets() -> NetConfig {
    NetConfig {
        alpha_hidden: vec![16, 16],
        alpha_out: 8,
        beta_hidden: vec![16, 16, 8],
        gamma_hidden: vec![16, 16, 16],
        omega_hidden: vec![16, 16, 32],
        inverse_hidden: vec![16, 16, 16],
        policy_hidden: vec![16, 16, 16],
    }
}

fn small(env: EnvKind, seed: u64) -> RunConfig {
    RunConfig {
        env,
        seed,
        state_dim: 6,
        update_interval: 8,
        reset_interval: 32,
        nets: small_nets(),
        ..RunConfig::default()
    }
}

#[test]
fn published_schedule_arithmetic() {
    let s = Schedule::from_config(&RunConfig::default()).unwrap();
    assert_eq!(s.k, 128);
    assert_eq!(s.samplings, 4);
    let small = Schedule::from_config(&small(EnvKind::Maze, 0)).unwrap();
    assert_eq!((small.k, small.samplings, small.history_depth()), (2, 4, 7));
}

#[test]
fn lpb_is_zero_after_sync_and_positive_after_an_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for env in [EnvKind::Maze, EnvKind::Pendulum] {
        let mut t = Trainer::new(small(env, 3)).unwrap();
        let d = t.dims;
        let inputs: Vec<[Array2<f64>; 3]> = (0..100)
            .map(|_| {
                let mut m = |c: usize| Array2::from_shape_fn((1, c), |_| rng.random_range(-1.0..1.0));
                [m(d.obs), m(d.state), m(d.action)]
            })
            .collect();
        let lpb = |t: &Trainer, x: &[Array2<f64>; 3]| {
            reward_lpb(&t.models.phi, &t.models.clone, x[0].view(), x[1].view(), x[2].view()).unwrap()[0]
        };
        let phi = t.models.phi.clone();
        t.models.clone.sync(&phi).unwrap();
        assert_eq!(t.models.clone.age(), 0);
        for x in &inputs {
            assert_eq!(lpb(&t, x), 0.0);
        }
        let batch = t.act().unwrap();
        let (loss, _) = t.update_phi_omega(&batch).unwrap();
        assert!(loss > 0.0);
        for x in &inputs {
            assert!(lpb(&t, x) > 0.0);
        }
    }
}

fn labels_of(sets: &[&ParamSet]) -> BTreeSet<String> {
    sets.iter()
        .flat_map(|s| s.entries().iter().map(|(n, _)| s.label(n)))
        .collect()
}

fn gradient_labels(lg: &mut LossGraph) -> BTreeSet<String> {
    let grads = lg.backward().unwrap();
    for (_, label, g) in grads.iter() {
        assert!(label.is_some(), "unlabelled gradient leaf");
        assert!(g.iter().all(|v| v.is_finite()));
    }
    grads.labels().map(str::to_string).collect()
}

#[test]
fn each_loss_touches_only_its_own_parameters() {
    let mut t = Trainer::new(small(EnvKind::Maze, 4)).unwrap();
    while t.history.len() < t.schedule.history_depth() {
        t.train_step().unwrap();
    }
    let batch = t.act().unwrap();
    let m = &t.models;
    let (mut phi_omega, _) = t.phi_omega_loss(&batch).unwrap();
    let [a, b, c] = m.phi.param_sets();
    assert_eq!(gradient_labels(&mut phi_omega), labels_of(&[a, b, c, &m.omega.params]));

    let mut g = t.interval_losses().unwrap().expect("history is deep enough");
    assert_eq!(gradient_labels(&mut g.inverse), labels_of(&[&m.inverse.params]));
    for p in 0..2 {
        assert_eq!(gradient_labels(&mut g.policies[p]), labels_of(&[&m.pair.policies[p].params]));
    }
    assert_eq!(gradient_labels(&mut g.temperature), labels_of(&[&m.temperature]));

    // the policy loss does depend on the frozen models it flows through
    let grads = g.policies[0].backward().unwrap();
    let total: f64 = grads.iter().map(|(_, _, g)| g.iter().map(|v| v.abs()).sum::<f64>()).sum();
    assert!(total > 0.0);
}

fn snapshot(t: &Trainer, p: usize) -> (Vec<u64>, Vec<u64>, u64) {
    let pol = &t.models.pair.policies[p].params;
    let opt = &t.models.pair.optimizers[p];
    let bits = |v: &mut dyn Iterator<Item = &f64>| v.map(|x| x.to_bits()).collect::<Vec<_>>();
    let params = bits(&mut pol.values().flat_map(|a| a.iter()));
    let moments = bits(&mut opt.first_moments().iter().chain(opt.second_moments()).flat_map(|a| a.iter()));
    (params, moments, opt.step_count())
}

#[test]
fn reset_picks_the_lower_window_and_spares_the_survivor() {
    let weights = IntrinsicWeights::new(0.5, 1.0, 0.1, 2);
    // window means 0.5·2 + 1 = 2 and 0.5·1 + 0.25 = 0.75
    let mut window = Vec::new();
    for i in 0..10 {
        window.push(RewardSample { r_inverse: 2.0, r_lpb: 1.0, log_prob: -3.0, policy: 0 });
        window.push(RewardSample { r_inverse: 1.0, r_lpb: 0.25, log_prob: 5.0 * i as f64, policy: 1 });
    }
    assert_eq!(reset_score(&window, &weights).unwrap(), [2.0, 0.75]);

    for (sums, want) in [([4.0, 1.5], 1), ([1.0, 3.0], 0), ([2.0, 2.0], 0)] {
        let mut t = Trainer::new(small(EnvKind::Maze, 5)).unwrap();
        for _ in 0..20 {
            t.train_step().unwrap();
        }
        let pair = &mut t.models.pair;
        pair.score_sums = sums;
        pair.score_counts = [2, 2];
        assert_eq!(policy_to_reset(pair.scores()), want);
        let survivor = 1 - want;
        let before_survivor = snapshot(&t, survivor);
        let before_reset = snapshot(&t, want);
        let event = t.maybe_reset_policy().expect("both windows have samples");
        assert_eq!(event.policy, want);
        assert_eq!(event.scores, [sums[0] / 2.0, sums[1] / 2.0]);
        assert_eq!(snapshot(&t, survivor), before_survivor, "survivor changed");
        let after = snapshot(&t, want);
        assert_ne!(after.0, before_reset.0);
        assert_eq!(after.2, 0);
        assert_eq!(t.models.pair.score_counts, [0, 0]);
    }
}

#[test]
fn random_ablation_never_updates_policies() {
    let mut cfg = small(EnvKind::Maze, 6);
    cfg.ablation = Ablation::Random;
    let mut t = Trainer::new(cfg).unwrap();
    let before = t.models.pair.policies.clone();
    for _ in 0..40 {
        let m = t.train_step().unwrap();
        assert!(m.loss_pi1.is_none() && m.loss_pi2.is_none() && m.loss_i.is_none());
    }
    assert_eq!(t.models.pair.policies, before);
    assert!(t.resets.is_empty());
}

#[test]
fn frozen_batch_loss_halves_within_2000_updates() {
    let mut cfg = small(EnvKind::Maze, 7);
    cfg.nets = NetConfig::default();
    let mut t = Trainer::new(cfg).unwrap();
    let batch = t.act().unwrap();
    let (first, _) = t.update_phi_omega(&batch).unwrap();
    let mut last = first;
    for _ in 1..2000 {
        last = t.update_phi_omega(&batch).unwrap().0;
        if last <= 0.5 * first {
            break;
        }
    }
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn short_runs_are_bitwise_reproducible_and_checkpointed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(EnvKind::Maze, 11);
    cfg.steps = 120;
    cfg.checkpoint_every = 50;
    cfg.out_dir = dir.path().to_path_buf();
    let a = RunPaths::new(&cfg.out_dir);
    let files = [a.metrics(), a.final_checkpoint(), a.latest(), a.events(), a.train_set()];
    let read_all = || files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>();
    run_pretraining(&cfg).unwrap();
    let first = read_all();
    run_pretraining(&cfg).unwrap();
    for (f, (x, y)) in files.iter().zip(first.iter().zip(read_all())) {
        assert!(*x == y, "{} differs between runs", f.display());
    }
    let log = read_metrics(&a.metrics()).unwrap();
    assert_eq!(log.len(), 120);
    assert!(log.iter().any(|m| m.loss_pi1.is_some()));
    let model = load_model(&a.final_checkpoint()).unwrap();
    assert_eq!(model.step, 120);
    let c = Container::load(&a.train_set()).unwrap();
    assert_eq!(c.require("obs").unwrap().nrows(), 400);
}

#[test]
fn thousand_step_run_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(EnvKind::Maze, 1);
    cfg.steps = 1000;
    cfg.checkpoint_every = 1000;
    cfg.out_dir = dir.path().to_path_buf();
    let summary = run_pretraining(&cfg).unwrap();
    assert_eq!(summary.steps, 1000);
    let paths = RunPaths::new(&cfg.out_dir);
    assert!(paths.latest().exists() && paths.final_checkpoint().exists());
    assert!(summary.coverage.unwrap() > 0.0);
    assert!(summary.interval_updates > 0 && summary.resets > 0);
}

#[test]
fn encoder_rejects_a_checkpoint_of_another_state_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(EnvKind::Maze, 2);
    cfg.state_dim = 20;
    cfg.steps = 5;
    cfg.out_dir = dir.path().to_path_buf();
    run_pretraining(&cfg).unwrap();
    let mut tc = cfg.clone();
    tc.state_dim = 30;
    tc.transfer.encoder = EncoderKind::Xsrl;
    tc.transfer.encoder_checkpoint = Some(RunPaths::new(dir.path()).final_checkpoint());
    let err = Encoder::from_config(&tc).unwrap_err();
    assert!(matches!(err, XsrlError::Checkpoint { .. }), "{err}");
    assert!(err.to_string().contains("20") && err.to_string().contains("30"));
    tc.state_dim = 20;
    assert_eq!(Encoder::from_config(&tc).unwrap().dim(EnvKind::Maze), 20);
    tc.env = EnvKind::Pendulum;
    assert!(Encoder::from_config(&tc).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reset_choice_is_the_argmin_with_ties_to_the_first(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let want = if b < a { 1 } else { 0 };
        prop_assert_eq!(policy_to_reset([a, b]), want);
        prop_assert_eq!(policy_to_reset([a, a]), 0);
    }

    #[test]
    fn sampling_period_covers_the_interval(t_pi in 1u64..4096, b_half in 1usize..64, mult in 1usize..8) {
        let b = 2 * b_half;
        let cfg = RunConfig {
            update_interval: t_pi,
            reset_interval: t_pi + 1,
            batch_size: b,
            policy_batch_size: b * mult,
            ..RunConfig::default()
        };
        match Schedule::from_config(&cfg) {
            Ok(s) => {
                prop_assert_eq!(s.k, (t_pi as usize * b) / (b * mult));
                prop_assert_eq!(s.samplings, mult);
                prop_assert!(s.history_depth() as u64 <= t_pi);
            }
            Err(_) => prop_assert!((t_pi as usize * b) / (b * mult) == 0),
        }
    }
}
