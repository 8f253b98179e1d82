use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xsrl_core::envs::{
    maze_free, maze_walls, Env, Mode, PendulumWorld, Segment, World, DISTRACTOR_WALL, FIELD_OF_VIEW, NUM_RAYS,
    PENDULUM_DT, PENDULUM_G, PENDULUM_LENGTH, PENDULUM_MASS, PENDULUM_MAX_SPEED, PENDULUM_MAX_TORQUE, RAY_RANGE,
    WALL_COLORS,
};
use xsrl_core::rngs::stream;
use xsrl_core::EnvKind;

/// Nearest wall along a ray, via homogeneous line intersection.
fn brute_force_hit(o: (f64, f64), angle: f64, walls: &[Segment]) -> Option<(f64, usize)> {
    let cross = |u: [f64; 3], v: [f64; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let d = (angle.cos(), angle.sin());
    let ray_line = cross([o.0, o.1, 1.0], [o.0 + d.0, o.1 + d.1, 1.0]);
    let mut best: Option<(f64, usize)> = None;
    for (i, w) in walls.iter().enumerate() {
        let wall_line = cross([w.a.0, w.a.1, 1.0], [w.b.0, w.b.1, 1.0]);
        let x = cross(ray_line, wall_line);
        if x[2].abs() < 1e-14 {
            continue;
        }
        let p = (x[0] / x[2], x[1] / x[2]);
        let e = (w.b.0 - w.a.0, w.b.1 - w.a.1);
        let along = (p.0 - w.a.0) * e.0 + (p.1 - w.a.1) * e.1;
        let len2 = e.0 * e.0 + e.1 * e.1;
        let ahead = (p.0 - o.0) * d.0 + (p.1 - o.1) * d.1;
        if along < -1e-12 || along > len2 + 1e-12 || ahead < 0.0 {
            continue;
        }
        let t = ((p.0 - o.0).powi(2) + (p.1 - o.1).powi(2)).sqrt();
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, i));
        }
    }
    best
}

fn expected_observation(x: f64, y: f64, theta: f64, walls: &[Segment]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut depth = Vec::new();
    let mut color = Vec::new();
    let mut on_distractor = Vec::new();
    for i in 0..NUM_RAYS {
        let angle = theta - FIELD_OF_VIEW / 2.0 + FIELD_OF_VIEW * i as f64 / (NUM_RAYS - 1) as f64;
        match brute_force_hit((x, y), angle, walls) {
            Some((t, w)) if t < RAY_RANGE => {
                depth.push(t / RAY_RANGE);
                color.push(WALL_COLORS[w]);
                on_distractor.push(w == DISTRACTOR_WALL);
            }
            _ => {
                depth.push(1.0);
                color.push(0.0);
                on_distractor.push(false);
            }
        }
    }
    (depth, color, on_distractor)
}

fn random_pose(rng: &mut ChaCha8Rng, walls: &[Segment]) -> (f64, f64, f64) {
    loop {
        let p = (rng.random_range(0.0..3.0), rng.random_range(0.0..5.5));
        if maze_free(p, walls) {
            return (p.0, p.1, rng.random_range(-PI..PI));
        }
    }
}

fn maze(distractor: bool, seed: u64) -> Env {
    Env::new(EnvKind::Maze, distractor, stream(seed, "distractor:0")).unwrap()
}

#[test]
fn ray_depths_match_brute_force_on_1000_poses() {
    let walls = maze_walls();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut env = maze(false, 0);
    let mut hits = 0;
    for _ in 0..1000 {
        let (x, y, th) = random_pose(&mut rng, &walls);
        env.set_ground_truth(&[x, y, th]).unwrap();
        let obs = env.observe();
        let (depth, color, _) = expected_observation(x, y, th, &walls);
        for i in 0..NUM_RAYS {
            assert!((obs[i] - depth[i]).abs() <= 1e-9, "ray {i} at ({x}, {y}, {th}): {} vs {}", obs[i], depth[i]);
            assert_eq!(obs[NUM_RAYS + i], color[i]);
            hits += usize::from(depth[i] < 1.0);
        }
    }
    assert!(hits > 1000, "too few rays hit a wall within range");
}

fn random_action(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.3..1.3)).collect()
}

#[test]
fn transitions_reproduce_exactly_from_state_and_action() {
    for kind in [EnvKind::Maze, EnvKind::Pendulum] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut env = Env::new(kind, false, stream(0, "d")).unwrap();
        env.reset(Mode::Task, &mut stream(0, "env:0"));
        let dim = env.spec().action_dim;
        for _ in 0..2000 {
            let s = env.ground_truth();
            let a = random_action(&mut rng, dim);
            let step = env.step(&a).unwrap();
            let mut replay = Env::new(kind, false, stream(99, "d")).unwrap();
            replay.reset(Mode::Task, &mut stream(7, "other"));
            replay.set_ground_truth(&s).unwrap();
            let again = replay.step(&a).unwrap();
            assert_eq!(again.state, step.state, "{kind:?} from {s:?} with {a:?}");
            assert_eq!(again.obs, step.obs);
            if step.done {
                env.reset(Mode::Task, &mut rng);
            }
        }
    }
}

#[test]
fn distractor_changes_only_the_designated_wall_colour() {
    let walls = maze_walls();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut plain = maze(false, 0);
    let mut first = maze(true, 1);
    let mut second = maze(true, 2);
    for env in [&mut plain, &mut first, &mut second] {
        env.reset(Mode::Srl, &mut stream(0, "env:0"));
    }
    let mut distractor_seen = 0;
    let mut differing = 0;
    for _ in 0..3000 {
        let a = random_action(&mut rng, 2);
        let p = plain.step(&a).unwrap();
        let f = first.step(&a).unwrap();
        let s = second.step(&a).unwrap();
        assert_eq!(p.state, f.state);
        assert_eq!(p.state, s.state);
        let (_, _, on_distractor) = expected_observation(p.state[0], p.state[1], p.state[2], &walls);
        for i in 0..NUM_RAYS {
            assert_eq!(p.obs[i], f.obs[i]);
            assert_eq!(p.obs[i], s.obs[i]);
            let c = NUM_RAYS + i;
            if on_distractor[i] {
                distractor_seen += 1;
                differing += usize::from(f.obs[c] != s.obs[c]);
            } else {
                assert_eq!(p.obs[c], f.obs[c], "ray {i} off the distractor wall changed colour");
                assert_eq!(p.obs[c], s.obs[c]);
            }
        }
        if p.done {
            for env in [&mut plain, &mut first, &mut second] {
                env.reset(Mode::Srl, &mut stream(0, "env:0"));
            }
        }
    }
    assert!(distractor_seen > 100);
    assert!(differing * 10 > distractor_seen * 9);
}

/// Upper bound on the energy change of one semi-implicit Euler step, from
/// the work done by the torque plus the integrator's second-order terms.
fn energy_step_bound(u: f64, w0: f64, w1: f64) -> f64 {
    let (m, l, g, dt) = (PENDULUM_MASS, PENDULUM_LENGTH, PENDULUM_G, PENDULUM_DT);
    let max_acc = 3.0 * g / (2.0 * l) + 3.0 * PENDULUM_MAX_TORQUE / (m * l * l);
    u.abs() * dt * w0.abs().max(w1.abs()) + m * g * l / 4.0 * dt * dt * (max_acc + w1 * w1) + 1e-12
}

#[test]
fn pendulum_energy_stays_bounded_over_10000_random_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = PendulumWorld::default();
    p.reset(Mode::Task, &mut rng);
    let e_max = PENDULUM_MASS * PENDULUM_LENGTH.powi(2) / 6.0 * PENDULUM_MAX_SPEED.powi(2)
        + PENDULUM_MASS * PENDULUM_G * PENDULUM_LENGTH / 2.0;
    for _ in 0..10_000 {
        let a: f64 = rng.random_range(-1.0..1.0);
        let (e0, w0) = (p.energy(), p.theta_dot);
        p.apply(a);
        let (e1, w1) = (p.energy(), p.theta_dot);
        let bound = energy_step_bound(a * PENDULUM_MAX_TORQUE, w0, w1);
        assert!(e1 - e0 <= bound, "energy rose by {} > {bound}", e1 - e0);
        if w1.abs() < PENDULUM_MAX_SPEED {
            assert!(e0 - e1 <= bound, "energy fell by {} > {bound}", e0 - e1);
        }
        assert!(e1.abs() <= e_max + 1e-9);
    }
}

#[test]
fn srl_mode_pays_no_reward_on_either_world() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [EnvKind::Maze, EnvKind::Pendulum] {
        let mut env = Env::new(kind, false, stream(0, "d")).unwrap();
        env.reset(Mode::Srl, &mut rng);
        for _ in 0..600 {
            let a = random_action(&mut rng, env.spec().action_dim);
            let s = env.step(&a).unwrap();
            assert_eq!(s.reward, 0.0);
            if s.done {
                assert_eq!(env.elapsed(), 500);
                env.reset(Mode::Srl, &mut rng);
            }
        }
        assert!(matches!((&env.world, kind), (World::Maze(_), EnvKind::Maze) | (World::Pendulum(_), EnvKind::Pendulum)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn executed_action_is_the_clipped_command(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut env = maze(false, 0);
        env.reset(Mode::Srl, &mut stream(0, "env:0"));
        let s = env.step(&[a, b]).unwrap();
        prop_assert_eq!(s.executed, vec![a.clamp(-1.0, 1.0), b.clamp(-1.0, 1.0)]);
    }

    #[test]
    fn observations_stay_in_unit_range(x in 0.0f64..3.0, y in 0.0f64..5.5, th in -PI..PI) {
        let walls = maze_walls();
        prop_assume!(maze_free((x, y), &walls));
        let mut env = maze(true, 3);
        env.set_ground_truth(&[x, y, th]).unwrap();
        for v in env.observe() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn robot_stays_in_free_space(actions in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..200)) {
        let walls = maze_walls();
        let mut env = maze(false, 0);
        env.reset(Mode::Srl, &mut stream(0, "env:0"));
        for (l, r) in actions {
            let s = env.step(&[l, r]).unwrap();
            prop_assert!(maze_free((s.state[0], s.state[1]), &walls));
        }
    }
}
