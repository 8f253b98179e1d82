//! Desk-scale partially observable worlds: a differential-drive robot in a
//! U-shaped corridor seen through depth/colour rays, and a pendulum observed
//! through its angle only.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::config::EnvKind;
use crate::error::{check_dim, Result, XsrlError};
use crate::rngs::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Reward-free, fixed initial state.
    Srl,
    /// Random initial state, extrinsic reward.
    Task,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub srl_horizon: usize,
    pub task_horizon: usize,
    pub state_dim: usize,
    /// Extra task inputs appended to the encoded state (the maze goal).
    pub task_extra_dim: usize,
}

impl EnvSpec {
    pub fn horizon(&self, mode: Mode) -> usize {
        match mode {
            Mode::Srl => self.srl_horizon,
            Mode::Task => self.task_horizon,
        }
    }

    pub fn clip(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode over (terminal or horizon reached).
    pub done: bool,
    /// Episode ended by reaching a terminal state (no bootstrapping).
    pub terminal: bool,
    /// Robot inside the goal disc after this step (maze task).
    pub at_goal: bool,
    pub state: Vec<f64>,
    /// Action actually executed after clipping.
    pub executed: Vec<f64>,
}

pub const SRL_HORIZON: usize = 500;

// ---------------------------------------------------------------- maze --

pub const ROBOT_RADIUS: f64 = 0.25;
/// Distance travelled per step at full forward wheel speed.
pub const MAZE_SPEED: f64 = 0.25;
/// Heading change per step with wheels at (−1, +1).
pub const MAZE_TURN_RATE: f64 = 0.5;
pub const NUM_RAYS: usize = 16;
pub const FIELD_OF_VIEW: f64 = 2.0 * PI / 3.0;
pub const RAY_RANGE: f64 = 2.5;
pub const MAZE_TASK_HORIZON: usize = 100;
pub const GOAL_RADIUS: f64 = 0.35;
const MIN_GOAL_SEPARATION: f64 = 1.0;
/// Index of the wall whose colour is random when the distractor is on.
pub const DISTRACTOR_WALL: usize = 0;
pub const MAZE_START: (f64, f64, f64) = (0.5, 5.0, -FRAC_PI_2);
/// Cell size of the coverage grid.
pub const COVERAGE_CELL: f64 = 0.25;

/// Free-space outline of the U, counter-clockwise.
const MAZE_OUTLINE: [(f64, f64); 8] = [
    (0.0, 0.0),
    (3.0, 0.0),
    (3.0, 5.5),
    (2.0, 5.5),
    (2.0, 1.0),
    (1.0, 1.0),
    (1.0, 5.5),
    (0.0, 5.5),
];

/// Colour of each wall of the outline (wall `i` joins vertex `i` to `i+1`).
/// Long walls share a colour so corridor views repeat.
pub const WALL_COLORS: [f64; 8] = [0.2, 0.5, 0.9, 0.5, 0.7, 0.5, 0.9, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

pub fn maze_walls() -> Vec<Segment> {
    (0..MAZE_OUTLINE.len())
        .map(|i| Segment {
            a: MAZE_OUTLINE[i],
            b: MAZE_OUTLINE[(i + 1) % MAZE_OUTLINE.len()],
        })
        .collect()
}

/// Nearest hit of the ray `origin + t·(cos θ, sin θ)`, `t ≥ 0`, as
/// `(t, wall index)`.
pub fn cast_ray(origin: (f64, f64), angle: f64, walls: &[Segment]) -> Option<(f64, usize)> {
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut best: Option<(f64, usize)> = None;
    for (i, w) in walls.iter().enumerate() {
        let (ex, ey) = (w.b.0 - w.a.0, w.b.1 - w.a.1);
        let denom = dx * ey - dy * ex;
        if denom.abs() < 1e-12 {
            continue;
        }
        let (qx, qy) = (w.a.0 - origin.0, w.a.1 - origin.1);
        let t = (qx * ey - qy * ex) / denom;
        let u = (qx * dy - qy * dx) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&u) && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, i));
        }
    }
    best
}

fn closest_point(p: (f64, f64), s: &Segment) -> (f64, f64) {
    let (ex, ey) = (s.b.0 - s.a.0, s.b.1 - s.a.1);
    let len2 = ex * ex + ey * ey;
    let u = (((p.0 - s.a.0) * ex + (p.1 - s.a.1) * ey) / len2).clamp(0.0, 1.0);
    (s.a.0 + u * ex, s.a.1 + u * ey)
}

pub fn wall_distance(p: (f64, f64), walls: &[Segment]) -> f64 {
    walls
        .iter()
        .map(|s| {
            let q = closest_point(p, s);
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Point-in-U test on the closed outline.
pub fn inside_maze(p: (f64, f64)) -> bool {
    let (x, y) = p;
    let in_box = (0.0..=3.0).contains(&x) && (0.0..=5.5).contains(&y);
    let in_notch = x > 1.0 && x < 2.0 && y > 1.0;
    in_box && !in_notch
}

/// Centre positions the robot may occupy.
pub fn maze_free(p: (f64, f64), walls: &[Segment]) -> bool {
    inside_maze(p) && wall_distance(p, walls) >= ROBOT_RADIUS
}

/// Arc length along the corridor centreline, from the start end (0) to the
/// far end of the last leg.
pub fn corridor_progress(p: (f64, f64)) -> f64 {
    let (x, y) = p;
    if x <= 1.0 {
        5.5 - y.clamp(0.5, 5.5)
    } else if x >= 2.0 {
        5.0 + 2.0 + (y.clamp(0.5, 5.5) - 0.5)
    } else {
        5.0 + (x - 0.5).clamp(0.0, 2.0)
    }
}

/// Total centreline length, from the start cap to the far cap.
pub const CORRIDOR_LENGTH: f64 = 5.0 + 2.0 + 5.0;

/// Final 10% of the last leg.
pub fn in_far_end(p: (f64, f64)) -> bool {
    p.0 >= 2.0 && p.0 <= 3.0 && p.1 >= 5.5 - 0.55
}

/// Coverage grid cells whose centre the robot can occupy.
pub fn coverage_cells() -> Vec<(usize, usize)> {
    let walls = maze_walls();
    let (nx, ny) = ((3.0 / COVERAGE_CELL) as usize, (5.5 / COVERAGE_CELL) as usize);
    let mut cells = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let c = ((i as f64 + 0.5) * COVERAGE_CELL, (j as f64 + 0.5) * COVERAGE_CELL);
            if maze_free(c, &walls) {
                cells.push((i, j));
            }
        }
    }
    cells
}

pub fn coverage_cell(p: (f64, f64)) -> (usize, usize) {
    ((p.0 / COVERAGE_CELL).floor().max(0.0) as usize, (p.1 / COVERAGE_CELL).floor().max(0.0) as usize)
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[derive(Debug, Clone)]
pub struct MazeWorld {
    walls: Vec<Segment>,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    goal: Option<(f64, f64)>,
    distractor: bool,
    distractor_rng: StreamRng,
    distractor_color: f64,
}

impl MazeWorld {
    pub fn new(distractor: bool, distractor_rng: StreamRng) -> Self {
        let mut w = Self {
            walls: maze_walls(),
            x: MAZE_START.0,
            y: MAZE_START.1,
            theta: MAZE_START.2,
            goal: None,
            distractor,
            distractor_rng,
            distractor_color: WALL_COLORS[DISTRACTOR_WALL],
        };
        w.resample_distractor();
        w
    }

    pub fn spec() -> EnvSpec {
        EnvSpec {
            obs_dim: 2 * NUM_RAYS,
            action_dim: 2,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            srl_horizon: SRL_HORIZON,
            task_horizon: MAZE_TASK_HORIZON,
            state_dim: 3,
            task_extra_dim: 2,
        }
    }

    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn goal(&self) -> Option<(f64, f64)> {
        self.goal
    }

    pub fn set_pose(&mut self, x: f64, y: f64, theta: f64) {
        self.x = x;
        self.y = y;
        self.theta = wrap_angle(theta);
    }

    fn resample_distractor(&mut self) {
        if self.distractor {
            self.distractor_color = self.distractor_rng.random::<f64>();
        }
    }

    fn random_free_point<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let p = (rng.random_range(0.0..3.0), rng.random_range(0.0..5.5));
            if maze_free(p, &self.walls) {
                return p;
            }
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, mode: Mode, rng: &mut R) {
        match mode {
            Mode::Srl => {
                self.set_pose(MAZE_START.0, MAZE_START.1, MAZE_START.2);
                self.goal = None;
            }
            Mode::Task => {
                let p = self.random_free_point(rng);
                let theta = rng.random_range(-PI..PI);
                self.set_pose(p.0, p.1, theta);
                self.goal = Some(loop {
                    let g = self.random_free_point(rng);
                    if ((g.0 - p.0).powi(2) + (g.1 - p.1).powi(2)).sqrt() >= MIN_GOAL_SEPARATION {
                        break g;
                    }
                });
            }
        }
        self.resample_distractor();
    }

    /// Depths (normalized by the ray range) followed by per-ray wall colours.
    pub fn observe(&self) -> Vec<f64> {
        let mut depth = Vec::with_capacity(NUM_RAYS);
        let mut color = Vec::with_capacity(NUM_RAYS);
        for angle in ray_angles(self.theta) {
            match cast_ray((self.x, self.y), angle, &self.walls) {
                Some((t, wall)) if t < RAY_RANGE => {
                    depth.push(t / RAY_RANGE);
                    color.push(if wall == DISTRACTOR_WALL {
                        self.distractor_color
                    } else {
                        WALL_COLORS[wall]
                    });
                }
                _ => {
                    depth.push(1.0);
                    color.push(0.0);
                }
            }
        }
        depth.extend(color);
        depth
    }

    /// Moves the robot by `d` with sliding collision; returns whether any
    /// wall was touched.
    fn translate(&mut self, d: (f64, f64)) -> bool {
        let mut contact = false;
        // sub-steps keep each move below the radius so walls cannot be crossed
        let substeps = 2;
        for _ in 0..substeps {
            let mut p = (self.x + d.0 / substeps as f64, self.y + d.1 / substeps as f64);
            let mut resolved = false;
            for _ in 0..8 {
                let mut pushed = false;
                for s in &self.walls {
                    let q = closest_point(p, s);
                    let (vx, vy) = (p.0 - q.0, p.1 - q.1);
                    let dist = (vx * vx + vy * vy).sqrt();
                    if dist < ROBOT_RADIUS {
                        contact = true;
                        pushed = true;
                        if dist < 1e-12 {
                            break;
                        }
                        let k = ROBOT_RADIUS / dist;
                        p = (q.0 + vx * k, q.1 + vy * k);
                    }
                }
                if !pushed {
                    resolved = true;
                    break;
                }
            }
            if resolved && wall_distance(p, &self.walls) >= ROBOT_RADIUS - 1e-12 && inside_maze(p) {
                self.x = p.0;
                self.y = p.1;
            }
        }
        contact
    }

    /// Advances the pose for a clipped wheel command; returns wall contact.
    pub fn apply(&mut self, wheels: &[f64]) -> bool {
        let (vl, vr) = (wheels[0], wheels[1]);
        let linear = MAZE_SPEED * 0.5 * (vl + vr);
        let turn = MAZE_TURN_RATE * 0.5 * (vr - vl);
        let heading = self.theta + 0.5 * turn;
        self.theta = wrap_angle(self.theta + turn);
        if linear == 0.0 {
            return false;
        }
        self.translate((linear * heading.cos(), linear * heading.sin()))
    }

    fn at_goal(&self) -> bool {
        self.goal
            .is_some_and(|g| ((g.0 - self.x).powi(2) + (g.1 - self.y).powi(2)).sqrt() <= GOAL_RADIUS)
    }
}

pub fn ray_angles(theta: f64) -> impl Iterator<Item = f64> {
    (0..NUM_RAYS).map(move |i| theta - 0.5 * FIELD_OF_VIEW + FIELD_OF_VIEW * i as f64 / (NUM_RAYS - 1) as f64)
}

// ------------------------------------------------------------ pendulum --

pub const PENDULUM_MAX_TORQUE: f64 = 2.0;
pub const PENDULUM_MAX_SPEED: f64 = 8.0;
pub const PENDULUM_DT: f64 = 0.05;
pub const PENDULUM_G: f64 = 10.0;
pub const PENDULUM_MASS: f64 = 1.0;
pub const PENDULUM_LENGTH: f64 = 1.0;
pub const PENDULUM_TASK_HORIZON: usize = 1000;

/// Rod pendulum, θ = 0 upright. Only (cos θ, sin θ) is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumWorld {
    pub theta: f64,
    pub theta_dot: f64,
}

impl Default for PendulumWorld {
    fn default() -> Self {
        Self {
            theta: PI,
            theta_dot: 0.0,
        }
    }
}

impl PendulumWorld {
    pub fn spec() -> EnvSpec {
        EnvSpec {
            obs_dim: 2,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            srl_horizon: SRL_HORIZON,
            task_horizon: PENDULUM_TASK_HORIZON,
            state_dim: 2,
            task_extra_dim: 0,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, mode: Mode, rng: &mut R) {
        match mode {
            Mode::Srl => {
                self.theta = PI;
                self.theta_dot = 0.0;
            }
            Mode::Task => {
                self.theta = rng.random_range(-PI..PI);
                self.theta_dot = rng.random_range(-1.0..1.0);
            }
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin()]
    }

    /// Mechanical energy with the rod's moment of inertia `m l² / 3`.
    pub fn energy(&self) -> f64 {
        let (m, l) = (PENDULUM_MASS, PENDULUM_LENGTH);
        m * l * l / 6.0 * self.theta_dot.powi(2) + m * PENDULUM_G * l / 2.0 * self.theta.cos()
    }

    /// Semi-implicit Euler step for a clipped action in [−1, 1]; returns the
    /// task reward.
    pub fn apply(&mut self, action: f64) -> f64 {
        let (m, l) = (PENDULUM_MASS, PENDULUM_LENGTH);
        let u = action * PENDULUM_MAX_TORQUE;
        let reward = -(self.theta.powi(2) + 0.1 * self.theta_dot.powi(2) + 0.001 * u * u);
        let acc = 3.0 * PENDULUM_G / (2.0 * l) * self.theta.sin() + 3.0 / (m * l * l) * u;
        self.theta_dot = (self.theta_dot + acc * PENDULUM_DT).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
        self.theta = wrap_angle(self.theta + self.theta_dot * PENDULUM_DT);
        reward
    }
}

// ------------------------------------------------------------- wrapper --

#[derive(Debug, Clone)]
pub enum World {
    Maze(MazeWorld),
    Pendulum(PendulumWorld),
}

/// A world plus episode bookkeeping.
#[derive(Debug, Clone)]
pub struct Env {
    pub world: World,
    spec: EnvSpec,
    mode: Mode,
    t: usize,
    clip_logged: bool,
}

impl Env {
    pub fn new(kind: EnvKind, distractor: bool, distractor_rng: StreamRng) -> Result<Self> {
        let (world, spec) = match kind {
            EnvKind::Maze => (World::Maze(MazeWorld::new(distractor, distractor_rng)), MazeWorld::spec()),
            EnvKind::Pendulum => {
                if distractor {
                    return Err(XsrlError::config("distractor", "only the maze has a distractor wall"));
                }
                (World::Pendulum(PendulumWorld::default()), PendulumWorld::spec())
            }
        };
        Ok(Self {
            world,
            spec,
            mode: Mode::Srl,
            t: 0,
            clip_logged: false,
        })
    }

    pub fn spec_for(kind: EnvKind) -> EnvSpec {
        match kind {
            EnvKind::Maze => MazeWorld::spec(),
            EnvKind::Pendulum => PendulumWorld::spec(),
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn set_srl_horizon(&mut self, horizon: usize) {
        self.spec.srl_horizon = horizon;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Steps taken in the current episode.
    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, mode: Mode, rng: &mut R) -> Vec<f64> {
        self.mode = mode;
        self.t = 0;
        self.clip_logged = false;
        match &mut self.world {
            World::Maze(m) => m.reset(mode, rng),
            World::Pendulum(p) => p.reset(mode, rng),
        }
        self.observe()
    }

    pub fn observe(&self) -> Vec<f64> {
        match &self.world {
            World::Maze(m) => m.observe(),
            World::Pendulum(p) => p.observe(),
        }
    }

    /// Maze: (x, y, θ). Pendulum: (θ, θ̇).
    pub fn ground_truth(&self) -> Vec<f64> {
        match &self.world {
            World::Maze(m) => vec![m.x, m.y, m.theta],
            World::Pendulum(p) => vec![p.theta, p.theta_dot],
        }
    }

    pub fn set_ground_truth(&mut self, state: &[f64]) -> Result<()> {
        check_dim("ground-truth state", self.spec.state_dim, state.len())?;
        match &mut self.world {
            World::Maze(m) => m.set_pose(state[0], state[1], state[2]),
            World::Pendulum(p) => {
                p.theta = state[0];
                p.theta_dot = state[1];
            }
        }
        Ok(())
    }

    /// Goal coordinates appended to the task input (maze task mode only).
    pub fn task_extra(&self) -> Vec<f64> {
        match &self.world {
            World::Maze(m) => m.goal().map(|g| vec![g.0, g.1]).unwrap_or_else(|| vec![0.0, 0.0]),
            World::Pendulum(_) => Vec::new(),
        }
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        match &self.world {
            World::Maze(m) => Some(m.position()),
            World::Pendulum(_) => None,
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_dim("action", self.spec.action_dim, action.len())?;
        let executed = self.spec.clip(action);
        if executed != action && !self.clip_logged {
            log::debug!("action {action:?} clipped to {executed:?}");
            self.clip_logged = true;
        }
        self.t += 1;
        let (task_reward, at_goal) = match &mut self.world {
            World::Maze(m) => {
                let contact = m.apply(&executed);
                m.resample_distractor();
                let goal = m.at_goal();
                let r = if goal {
                    1.0
                } else if contact {
                    -1.0
                } else {
                    0.0
                };
                (r, goal && self.mode == Mode::Task)
            }
            World::Pendulum(p) => (p.apply(executed[0]), false),
        };
        let reward = match self.mode {
            Mode::Srl => 0.0,
            Mode::Task => task_reward,
        };
        // the maze keeps paying while the robot stays on the goal, so no
        // task has a terminal state
        Ok(Step {
            obs: self.observe(),
            reward,
            done: self.t >= self.spec.horizon(self.mode),
            terminal: false,
            at_goal,
            state: self.ground_truth(),
            executed,
        })
    }
}

// ---------------------------------------------------------- test data --

pub const TEST_DATASET_SIZE: usize = 400;

/// Held-out transitions stored in trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDataset {
    pub env: EnvKind,
    pub source: String,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
    /// True where a new trajectory begins.
    pub traj_start: Vec<bool>,
    /// Ground-truth state before each transition.
    pub states: Vec<Vec<f64>>,
}

impl TestDataset {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.obs.len();
        if [self.actions.len(), self.next_obs.len(), self.traj_start.len()] != [n; 3] {
            return Err(XsrlError::InvalidInput("test dataset arrays differ in length".into()));
        }
        if n > 0 && !self.traj_start[0] {
            return Err(XsrlError::InvalidInput("test dataset must start a trajectory at index 0".into()));
        }
        Ok(())
    }
}

/// Centreline waypoints from the start cap to the far cap.
pub fn maze_waypoints() -> Vec<(f64, f64)> {
    vec![(0.5, 5.0), (0.5, 0.5), (2.5, 0.5), (2.5, 5.25)]
}

/// Wheel command steering toward `target`.
pub fn steer_toward(pose: (f64, f64, f64), target: (f64, f64)) -> [f64; 2] {
    let desired = (target.1 - pose.1).atan2(target.0 - pose.0);
    let err = wrap_angle(desired - pose.2);
    // turn component saturates at the per-step turn rate
    let turn = (err / MAZE_TURN_RATE).clamp(-1.0, 1.0);
    let forward = if err.abs() > 0.6 { 0.0 } else { 1.0 - turn.abs() };
    [forward - turn, forward + turn]
}

/// Scripted traversal: follows the centreline waypoints (reversing at the
/// ends) with Gaussian action noise; four trajectories of 100 steps, two
/// from each end of the U.
pub fn build_maze_dataset(seed: u64) -> Result<TestDataset> {
    use rand_distr::{Distribution, Normal};
    let mut rng = crate::rngs::stream(seed, "testset:maze");
    let noise = Normal::new(0.0, 0.1).expect("valid std");
    let forward = maze_waypoints();
    let mut backward = forward.clone();
    backward.reverse();
    let per_traj = TEST_DATASET_SIZE / 4;
    let mut data = TestDataset {
        env: EnvKind::Maze,
        source: "scripted-traversal".into(),
        obs: Vec::new(),
        actions: Vec::new(),
        next_obs: Vec::new(),
        traj_start: Vec::new(),
        states: Vec::new(),
    };
    for traj in 0..4 {
        let mut env = Env::new(EnvKind::Maze, false, crate::rngs::stream(seed, "testset:distractor"))?;
        env.reset(Mode::Srl, &mut rng);
        let route = if traj % 2 == 0 { &forward } else { &backward };
        if traj % 2 == 1 {
            let (x, y) = route[0];
            env.set_ground_truth(&[x, y, FRAC_PI_2])?;
        }
        let mut next = 1;
        let mut dir: isize = 1;
        for i in 0..per_traj {
            let pose = env.ground_truth();
            let target = route[next];
            if ((target.0 - pose[0]).powi(2) + (target.1 - pose[1]).powi(2)).sqrt() < 0.2 {
                if next + 1 == route.len() || (dir < 0 && next == 0) {
                    dir = -dir;
                }
                next = (next as isize + dir) as usize;
            }
            let mut a = steer_toward((pose[0], pose[1], pose[2]), route[next]);
            for v in &mut a {
                *v = (*v + noise.sample(&mut rng)).clamp(-1.0, 1.0);
            }
            let o = env.observe();
            let step = env.step(&a)?;
            data.obs.push(o);
            data.actions.push(a.to_vec());
            data.next_obs.push(step.obs);
            data.traj_start.push(i == 0);
            data.states.push(pose);
        }
    }
    Ok(data)
}

/// Pendulum held-out data: four 100-step rollouts of a controller acting on
/// the ground-truth state from random task resets.
pub fn build_pendulum_dataset<F>(seed: u64, mut policy: F) -> Result<TestDataset>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut rng = crate::rngs::stream(seed, "testset:pendulum");
    let mut data = TestDataset {
        env: EnvKind::Pendulum,
        source: "trained-policy-rollout".into(),
        obs: Vec::new(),
        actions: Vec::new(),
        next_obs: Vec::new(),
        traj_start: Vec::new(),
        states: Vec::new(),
    };
    let per_traj = TEST_DATASET_SIZE / 4;
    for _ in 0..4 {
        let mut env = Env::new(EnvKind::Pendulum, false, crate::rngs::stream(seed, "unused"))?;
        env.reset(Mode::Task, &mut rng);
        for i in 0..per_traj {
            let state = env.ground_truth();
            let a = policy(&state)?;
            let o = env.observe();
            let step = env.step(&a)?;
            data.obs.push(o);
            data.actions.push(step.executed.clone());
            data.next_obs.push(step.obs);
            data.traj_start.push(i == 0);
            data.states.push(state);
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::stream;

    fn maze(distractor: bool) -> Env {
        Env::new(EnvKind::Maze, distractor, stream(0, "distractor:0")).unwrap()
    }

    #[test]
    fn srl_reset_is_constant() {
        let mut env = maze(false);
        let mut rng = stream(1, "env:0");
        let a = env.reset(Mode::Srl, &mut rng);
        env.step(&[1.0, 0.3]).unwrap();
        let b = env.reset(Mode::Srl, &mut rng);
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
    }

    #[test]
    fn pendulum_srl_reset_hangs_down() {
        let mut env = Env::new(EnvKind::Pendulum, false, stream(0, "x")).unwrap();
        let o = env.reset(Mode::Srl, &mut stream(0, "env:0"));
        assert!((o[0] + 1.0).abs() < 1e-12 && o[1].abs() < 1e-12);
    }

    #[test]
    fn task_reset_reproducible() {
        let mut a = maze(false);
        let mut b = maze(false);
        a.reset(Mode::Task, &mut stream(4, "env:0"));
        b.reset(Mode::Task, &mut stream(4, "env:0"));
        assert_eq!(a.ground_truth(), b.ground_truth());
        assert_eq!(a.task_extra(), b.task_extra());
        let g = a.task_extra();
        assert!(maze_free((g[0], g[1]), &maze_walls()));
    }

    #[test]
    fn zero_action_changes_nothing() {
        let mut env = maze(false);
        let o = env.reset(Mode::Srl, &mut stream(0, "env:0"));
        let s = env.ground_truth();
        let step = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(step.obs, o);
        assert_eq!(step.state, s);
    }

    #[test]
    fn srl_reward_is_zero_and_wall_contact_penalized_in_task() {
        let mut env = maze(false);
        env.reset(Mode::Srl, &mut stream(0, "env:0"));
        env.set_ground_truth(&[0.3, 3.0, PI]).unwrap();
        let step = env.step(&[1.0, 1.0]).unwrap();
        assert_eq!(step.reward, 0.0);
        env.reset(Mode::Task, &mut stream(0, "env:0"));
        env.set_ground_truth(&[0.3, 3.0, PI]).unwrap();
        let step = env.step(&[1.0, 1.0]).unwrap();
        assert_eq!(step.reward, -1.0);
        assert!(!step.done);
    }

    #[test]
    fn goal_reward_repeats_without_terminating() {
        let mut env = maze(false);
        env.reset(Mode::Task, &mut stream(0, "env:0"));
        let g = env.task_extra();
        env.set_ground_truth(&[g[0], g[1] - 0.2, FRAC_PI_2]).unwrap();
        let step = env.step(&[0.5, 0.5]).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(step.at_goal && !step.done && !step.terminal);
        let step = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(step.reward, 1.0);
    }

    #[test]
    fn srl_episode_ends_at_horizon() {
        let mut env = maze(false);
        env.reset(Mode::Srl, &mut stream(0, "env:0"));
        for i in 1..=SRL_HORIZON {
            let s = env.step(&[0.2, -0.1]).unwrap();
            assert_eq!(s.done, i == SRL_HORIZON);
        }
    }

    #[test]
    fn robot_never_penetrates_walls() {
        let mut env = maze(false);
        let mut rng = stream(3, "env:0");
        env.reset(Mode::Srl, &mut rng);
        let walls = maze_walls();
        for _ in 0..20_000 {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = env.step(&a).unwrap();
            let p = (s.state[0], s.state[1]);
            assert!(maze_free((p.0, p.1), &walls) || wall_distance(p, &walls) >= ROBOT_RADIUS - 1e-9);
            assert!(inside_maze(p));
            if s.done {
                env.reset(Mode::Srl, &mut rng);
            }
        }
    }

    #[test]
    fn full_speed_traversal_takes_about_47_steps() {
        let mut env = maze(false);
        env.reset(Mode::Srl, &mut stream(0, "env:0"));
        let route = maze_waypoints();
        let mut next = 1;
        let mut steps = 0;
        while !in_far_end(env.position().unwrap()) && steps < 200 {
            let p = env.ground_truth();
            if ((route[next].0 - p[0]).powi(2) + (route[next].1 - p[1]).powi(2)).sqrt() < 0.3 {
                next = (next + 1).min(route.len() - 1);
            }
            env.step(&steer_toward((p[0], p[1], p[2]), route[next])).unwrap();
            steps += 1;
        }
        assert!((40..=60).contains(&steps), "{steps}");
    }

    #[test]
    fn pendulum_observation_hides_velocity() {
        let mut env = Env::new(EnvKind::Pendulum, false, stream(0, "x")).unwrap();
        env.reset(Mode::Task, &mut stream(0, "env:0"));
        env.set_ground_truth(&[0.4, 3.0]).unwrap();
        let a = env.observe();
        env.set_ground_truth(&[0.4, -5.0]).unwrap();
        assert_eq!(a, env.observe());
    }

    #[test]
    fn pendulum_rejects_distractor() {
        assert!(Env::new(EnvKind::Pendulum, true, stream(0, "x")).is_err());
    }

    #[test]
    fn maze_dataset_has_400_transitions_and_spans_both_ends() {
        let d = build_maze_dataset(0).unwrap();
        d.validate().unwrap();
        assert_eq!(d.len(), TEST_DATASET_SIZE);
        let progress: Vec<f64> = d.states.iter().map(|s| corridor_progress((s[0], s[1]))).collect();
        let span = progress.iter().cloned().fold(f64::MIN, f64::max) - progress.iter().cloned().fold(f64::MAX, f64::min);
        assert!(span > 0.8 * CORRIDOR_LENGTH, "span {span}");
        assert_eq!(build_maze_dataset(0).unwrap(), d);
    }

    #[test]
    fn coverage_grid_is_nonempty() {
        let cells = coverage_cells();
        assert!(cells.len() > 40);
        assert!(cells.contains(&coverage_cell((MAZE_START.0, MAZE_START.1))));
    }
}
