//! The pretraining loop: B agents act with two discovery policies, φ and ω
//! take one gradient step per environment step, and the inverse model,
//! policies and temperature are updated every `T_π` steps from a delayed
//! history. The weaker policy is re-initialized every `T_reset` steps.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use xsrl_autodiff::{AdamConfig, AdamState, BoundParams, Gradients, Graph, NodeId, ParamSet};

use crate::checkpoint::Container;
use crate::config::{Ablation, EnvKind, RunConfig};
use crate::envs::{self, Env, EnvSpec, Mode};
use crate::error::{Result, XsrlError};
use crate::intrinsic::{
    policy_objective, policy_to_reset, reward_nodes, temperature_objective, FrozenModels, IntrinsicWeights,
    PolicyBatch, RewardSample,
};
use crate::nets::{
    inverse_forward, inverse_model, observation_predictor, CloneHandle, DenseModel, GaussianPolicy, ModelDims,
    PolicyPair, StateEstimator,
};
use crate::rngs::{self, StreamRng};

pub const METRICS_VERSION: u32 = 1;
pub const LATENT_INIT_STD: f64 = 0.02;
/// Number of recent training transitions kept for the train-set error.
pub const TRAIN_TAIL: usize = 400;

/// Update timing derived from the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub update_interval: u64,
    pub reset_interval: u64,
    /// Sampling period `k = ⌊T_π·B / B_π⌋`.
    pub k: usize,
    /// Samplings per interval batch, `⌊B_π / B⌋`.
    pub samplings: usize,
    pub agents: usize,
}

impl Schedule {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let k = (cfg.update_interval as usize * cfg.batch_size) / cfg.policy_batch_size;
        if k == 0 {
            return Err(XsrlError::config(
                "update_interval",
                "sampling period ⌊T_π·B/B_π⌋ is zero; increase update_interval",
            ));
        }
        Ok(Self {
            update_interval: cfg.update_interval,
            reset_interval: cfg.reset_interval,
            k,
            samplings: cfg.policy_batch_size / cfg.batch_size,
            agents: cfg.batch_size,
        })
    }

    /// Steps of history an interval update reaches back over.
    pub fn history_depth(&self) -> usize {
        self.k * (self.samplings - 1) + 1
    }

    pub fn policy_of_slot(&self, slot: usize) -> usize {
        usize::from(slot >= self.agents / 2)
    }
}

/// One environment step of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub obs: Array2<f64>,
    pub states: Array2<f64>,
    /// Sampled (pre-clip) actions.
    pub actions: Array2<f64>,
    /// Actions after clipping to the box, as fed to the models.
    pub executed: Array2<f64>,
    pub noise: Array2<f64>,
    pub next_states: Array2<f64>,
    pub next_obs: Array2<f64>,
}

/// Fixed-depth log of the most recent steps.
#[derive(Debug, Clone)]
pub struct HistoryRing {
    records: VecDeque<StepRecord>,
    capacity: usize,
}

impl HistoryRing {
    pub fn new(capacity: usize) -> Self {
        Self {
            records: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, r: StepRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record `offset` steps before the latest one.
    pub fn back(&self, offset: usize) -> Option<&StepRecord> {
        self.records.len().checked_sub(offset + 1).map(|i| &self.records[i])
    }
}

/// Every trained model with its optimizer state.
#[derive(Debug, Clone)]
pub struct Models {
    pub phi: StateEstimator,
    pub omega: DenseModel,
    pub inverse: DenseModel,
    pub pair: PolicyPair,
    pub clone: CloneHandle,
    /// Single entry `log_w_h`.
    pub temperature: ParamSet,
    pub phi_adam: [AdamState; 3],
    pub omega_adam: AdamState,
    pub inverse_adam: AdamState,
    pub temperature_adam: AdamState,
}

impl Models {
    pub fn new(cfg: &RunConfig, dims: ModelDims) -> Self {
        let seed = cfg.seed;
        let phi = StateEstimator::new(dims, &cfg.nets, &mut rngs::stream(seed, "init:phi"));
        let omega = observation_predictor(dims, &cfg.nets, &mut rngs::stream(seed, "init:omega"));
        let inverse = inverse_model(dims, &cfg.nets, &mut rngs::stream(seed, "init:inverse"));
        let pi1 = GaussianPolicy::discovery("pi1", dims, &cfg.nets, &mut rngs::stream(seed, "init:pi1"));
        let pi2 = GaussianPolicy::discovery("pi2", dims, &cfg.nets, &mut rngs::stream(seed, "init:pi2"));
        let pair = PolicyPair::new(pi1, pi2, AdamConfig::with_lr(cfg.lr.policy));
        let clone = CloneHandle::new(&phi, &cfg.nets);
        let temperature = ParamSet::from_entries(
            "temperature",
            vec![("log_w_h".into(), Array2::from_elem((1, 1), cfg.init_temperature.ln()))],
        );
        let phi_adam = phi.param_sets().map(|p| AdamState::new(AdamConfig::with_lr(cfg.lr.phi), p));
        Self {
            omega_adam: AdamState::new(AdamConfig::with_lr(cfg.lr.omega), &omega.params),
            inverse_adam: AdamState::new(AdamConfig::with_lr(cfg.lr.inverse), &inverse.params),
            temperature_adam: AdamState::new(AdamConfig::with_lr(cfg.lr.temperature), &temperature),
            phi,
            omega,
            inverse,
            pair,
            clone,
            temperature,
            phi_adam,
        }
    }

    pub fn log_w_h(&self) -> f64 {
        self.temperature.entries()[0].1[[0, 0]]
    }

    fn all_params(&self) -> Vec<&ParamSet> {
        let mut v: Vec<&ParamSet> = self.phi.param_sets().to_vec();
        v.push(&self.omega.params);
        v.push(&self.inverse.params);
        v.push(&self.pair.policies[0].params);
        v.push(&self.pair.policies[1].params);
        v.extend(self.clone.estimator().param_sets());
        v.push(&self.temperature);
        v
    }
}

/// JSON-lines record emitted after every training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub version: u32,
    pub env: EnvKind,
    pub step: u64,
    pub loss_phi_omega: f64,
    pub loss_i: Option<f64>,
    pub loss_pi1: Option<f64>,
    pub loss_pi2: Option<f64>,
    pub w_h: f64,
    pub cum_score_1: Option<f64>,
    pub cum_score_2: Option<f64>,
    pub coverage: Option<f64>,
    pub reached_far_end_step: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalLosses {
    pub inverse: f64,
    pub policy: [f64; 2],
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetEvent {
    pub step: u64,
    /// 0-based index of the re-initialized policy.
    pub policy: usize,
    pub scores: [f64; 2],
}

/// A scalar loss with the bindings of the parameter sets it trains.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub graph: Graph,
    pub loss: NodeId,
    pub trained: Vec<BoundParams>,
}

impl LossGraph {
    pub fn value(&self) -> f64 {
        self.graph.scalar_value(self.loss)
    }

    /// The gradient map handed to the optimizers.
    pub fn backward(&mut self) -> Result<Gradients> {
        Ok(self.graph.backward(self.loss)?)
    }
}

#[derive(Debug, Clone)]
pub struct IntervalGraphs {
    pub inverse: LossGraph,
    pub policies: [LossGraph; 2],
    pub temperature: LossGraph,
}

/// Transitions produced by one acting phase.
#[derive(Debug, Clone)]
pub struct ActBatch {
    pub obs: Array2<f64>,
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub executed: Array2<f64>,
    pub noise: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub done: Vec<bool>,
}

/// Trainer state for one pretraining run.
pub struct Trainer {
    pub cfg: RunConfig,
    pub spec: EnvSpec,
    pub schedule: Schedule,
    pub dims: ModelDims,
    pub models: Models,
    pub weights: IntrinsicWeights,
    action_box: (f64, f64),
    envs: Vec<Env>,
    env_rngs: Vec<StreamRng>,
    latent_rng: StreamRng,
    noise_rngs: [StreamRng; 2],
    action_rng: StreamRng,
    pub obs: Array2<f64>,
    pub states: Array2<f64>,
    pub history: HistoryRing,
    step: u64,
    coverage_mask: Vec<bool>,
    visited: Vec<bool>,
    free_cells: usize,
    visited_count: usize,
    far_end_step: Option<u64>,
    train_tail: VecDeque<[Vec<f64>; 4]>,
    pub resets: Vec<ResetEvent>,
    /// Intrinsic rewards of the latest acting step, one per agent.
    pub last_rewards: Vec<RewardSample>,
    pub interval_updates: u64,
    pub skipped_interval_updates: u64,
}

const GRID_W: usize = 12;
const GRID_H: usize = 22;

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let schedule = Schedule::from_config(&cfg)?;
        let spec = Env::spec_for(cfg.env);
        let dims = ModelDims {
            obs: spec.obs_dim,
            action: spec.action_dim,
            state: cfg.state_dim,
        };
        let models = Models::new(&cfg, dims);
        let (w_i, w_lpb) = match cfg.ablation {
            Ablation::Full | Ablation::Random => (cfg.w_inverse, cfg.w_lpb),
            Ablation::Maxent => (0.0, 0.0),
        };
        let mut weights = IntrinsicWeights::new(w_i, w_lpb, cfg.init_temperature, spec.action_dim);
        if let Some(h) = cfg.target_entropy {
            weights.target_entropy = h;
        }
        let b = cfg.batch_size;
        let mut envs = Vec::with_capacity(b);
        let mut env_rngs = Vec::with_capacity(b);
        for slot in 0..b {
            let mut env = Env::new(cfg.env, cfg.distractor, rngs::stream(cfg.seed, &format!("distractor:{slot}")))?;
            env.set_srl_horizon(cfg.srl_horizon as usize);
            envs.push(env);
            env_rngs.push(rngs::stream(cfg.seed, &format!("env:{slot}")));
        }
        let mut obs = Array2::zeros((b, spec.obs_dim));
        for (slot, env) in envs.iter_mut().enumerate() {
            let o = env.reset(Mode::Srl, &mut env_rngs[slot]);
            obs.row_mut(slot).assign(&ndarray::ArrayView1::from(&o));
        }
        let mut latent_rng = rngs::stream(cfg.seed, "latent");
        let states = draw_latent(&mut latent_rng, b, cfg.state_dim);
        let mut coverage_mask = vec![false; GRID_W * GRID_H];
        for (i, j) in envs::coverage_cells() {
            coverage_mask[i * GRID_H + j] = true;
        }
        let free_cells = coverage_mask.iter().filter(|&&m| m).count();
        let action_box = (spec.action_low[0], spec.action_high[0]);
        debug_assert!(spec.action_low.iter().all(|&l| l == action_box.0));
        debug_assert!(spec.action_high.iter().all(|&h| h == action_box.1));
        let mut t = Self {
            action_box,
            noise_rngs: [rngs::stream(cfg.seed, "policy-noise:1"), rngs::stream(cfg.seed, "policy-noise:2")],
            action_rng: rngs::stream(cfg.seed, "random-actions"),
            history: HistoryRing::new(schedule.history_depth()),
            cfg,
            spec,
            schedule,
            dims,
            models,
            weights,
            envs,
            env_rngs,
            latent_rng,
            obs,
            states,
            step: 0,
            visited: vec![false; GRID_W * GRID_H],
            coverage_mask,
            free_cells,
            visited_count: 0,
            far_end_step: None,
            train_tail: VecDeque::with_capacity(TRAIN_TAIL),
            resets: Vec::new(),
            last_rewards: Vec::new(),
            interval_updates: 0,
            skipped_interval_updates: 0,
        };
        t.track_positions();
        Ok(t)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn far_end_step(&self) -> Option<u64> {
        self.far_end_step
    }

    pub fn coverage(&self) -> Option<f64> {
        (self.cfg.env == EnvKind::Maze).then(|| self.visited_count as f64 / self.free_cells as f64)
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    fn track_positions(&mut self) {
        for env in &self.envs {
            let Some(p) = env.position() else { continue };
            let (i, j) = envs::coverage_cell(p);
            if i < GRID_W && j < GRID_H {
                let c = i * GRID_H + j;
                if self.coverage_mask[c] && !self.visited[c] {
                    self.visited[c] = true;
                    self.visited_count += 1;
                }
            }
            if self.far_end_step.is_none() && envs::in_far_end(p) {
                self.far_end_step = Some(self.step);
            }
        }
    }

    /// Samples actions for every agent and advances the environments.
    pub fn act(&mut self) -> Result<ActBatch> {
        let b = self.schedule.agents;
        let a_dim = self.dims.action;
        let half = b / 2;
        let (actions, noise) = match self.cfg.ablation {
            Ablation::Random => {
                let lo = &self.spec.action_low;
                let hi = &self.spec.action_high;
                let rng = &mut self.action_rng;
                let a = Array2::from_shape_fn((b, a_dim), |(_, j)| rng.random_range(lo[j]..=hi[j]));
                (a, Array2::zeros((b, a_dim)))
            }
            Ablation::Full | Ablation::Maxent => {
                let mut actions = Array2::zeros((b, a_dim));
                let mut noise = Array2::zeros((b, a_dim));
                for p in 0..2 {
                    let rows = p * half..(p + 1) * half;
                    let rng = &mut self.noise_rngs[p];
                    let eps = Array2::from_shape_fn((half, a_dim), |_| StandardNormal.sample(rng));
                    let (a, _) = self.models.pair.policies[p].act(self.states.slice(s![rows.clone(), ..]), eps.view())?;
                    actions.slice_mut(s![rows.clone(), ..]).assign(&a);
                    noise.slice_mut(s![rows, ..]).assign(&eps);
                }
                (actions, noise)
            }
        };
        let mut next_obs = Array2::zeros(self.obs.raw_dim());
        let mut executed = Array2::zeros(actions.raw_dim());
        let mut done = Vec::with_capacity(b);
        for (slot, env) in self.envs.iter_mut().enumerate() {
            let step = env.step(actions.row(slot).as_slice().expect("contiguous"))?;
            debug_assert_eq!(step.reward, 0.0);
            next_obs.row_mut(slot).assign(&ndarray::ArrayView1::from(&step.obs));
            executed.row_mut(slot).assign(&ndarray::ArrayView1::from(&step.executed));
            done.push(step.done);
        }
        Ok(ActBatch {
            obs: self.obs.clone(),
            states: self.states.clone(),
            actions,
            executed,
            noise,
            next_obs,
            done,
        })
    }

    /// φ/ω prediction loss graph for a batch; returns it with the next
    /// latent states node.
    pub fn phi_omega_loss(&self, batch: &ActBatch) -> Result<(LossGraph, NodeId)> {
        let mut g = Graph::new();
        let m = &self.models;
        let phi_b = m.phi.bind(&mut g, true);
        let omega_b = m.omega.params.bind(&mut g, true);
        let o = g.constant(batch.obs.clone());
        let st = g.constant(batch.states.clone());
        let a = g.constant(batch.executed.clone());
        let target = g.constant(batch.next_obs.clone());
        let s_next = m.phi.forward(&mut g, &phi_b, o, st, a)?;
        let pred = m.omega.forward(&mut g, &omega_b, s_next)?;
        let loss = g.mean_squared_error(pred, target)?;
        let mut trained: Vec<BoundParams> = phi_b.parts().into_iter().cloned().collect();
        trained.push(omega_b);
        Ok((LossGraph { graph: g, loss, trained }, s_next))
    }

    /// One Adam step on φ ∪ ω for the batch; returns the loss and the next
    /// latent states (computed with the pre-update parameters).
    pub fn update_phi_omega(&mut self, batch: &ActBatch) -> Result<(f64, Array2<f64>)> {
        let (mut lg, s_next) = self.phi_omega_loss(batch)?;
        let value = lg.value();
        let next_states = lg.graph.value(s_next).clone();
        let grads = lg.backward()?;
        let m = &mut self.models;
        for (i, set) in m.phi.param_sets_mut().into_iter().enumerate() {
            let gr = set.collect_grads(&grads, &lg.trained[i])?;
            m.phi_adam[i].update(set, &gr)?;
        }
        let gr = m.omega.params.collect_grads(&grads, &lg.trained[3])?;
        m.omega_adam.update(&mut m.omega.params, &gr)?;
        Ok((value, next_states))
    }

    fn reward_samples(&self, batch: &ActBatch, next_states: &Array2<f64>) -> Result<Vec<RewardSample>> {
        let m = &self.models;
        let lagged = m.clone.estimator().predict(batch.obs.view(), batch.states.view(), batch.executed.view())?;
        let joint = ndarray::concatenate(Axis(1), &[next_states.view(), batch.states.view()]).expect("same rows");
        let a_hat = m.inverse.predict(joint.view())?;
        Ok((0..batch.obs.nrows())
            .map(|r| RewardSample {
                r_inverse: (&a_hat.row(r) - &batch.executed.row(r)).mapv(|x| x * x).sum(),
                r_lpb: (&next_states.row(r) - &lagged.row(r)).mapv(|x| x * x).sum(),
                log_prob: 0.0,
                policy: self.schedule.policy_of_slot(r),
            })
            .collect())
    }

    /// Loss graphs of the inverse model, both policies and the temperature
    /// over the delayed history. `None` when history is too short.
    pub fn interval_losses(&self) -> Result<Option<IntervalGraphs>> {
        if self.history.len() < self.schedule.history_depth() {
            return Ok(None);
        }
        let records: Vec<&StepRecord> = (0..self.schedule.samplings)
            .map(|i| self.history.back(i * self.schedule.k).expect("depth checked"))
            .collect();
        let cat = |f: fn(&StepRecord) -> &Array2<f64>, rows: std::ops::Range<usize>| -> Array2<f64> {
            let views: Vec<_> = records.iter().map(|r| f(r).slice(s![rows.clone(), ..])).collect();
            ndarray::concatenate(Axis(0), &views).expect("same widths")
        };
        let b = self.schedule.agents;
        let half = b / 2;
        let m = &self.models;

        // inverse model on every sample
        let inverse = {
            let mut g = Graph::new();
            let ib = m.inverse.params.bind(&mut g, true);
            let sn = g.constant(cat(|r| &r.next_states, 0..b));
            let st = g.constant(cat(|r| &r.states, 0..b));
            let a = g.constant(cat(|r| &r.executed, 0..b));
            let pred = inverse_forward(&m.inverse, &mut g, &ib, sn, st)?;
            let loss = g.mean_squared_error(pred, a)?;
            LossGraph { graph: g, loss, trained: vec![ib] }
        };

        // each policy on its own agents' samples
        let mut policies = Vec::with_capacity(2);
        let mut log_probs = Vec::with_capacity(records.len() * b);
        for p in 0..2 {
            let rows = p * half..(p + 1) * half;
            let obs = cat(|r| &r.obs, rows.clone());
            let states = cat(|r| &r.states, rows.clone());
            let noise = cat(|r| &r.noise, rows.clone());
            let ids = vec![p; obs.nrows()];
            let batch = PolicyBatch {
                policy_id: p,
                sample_policies: &ids,
                obs: &obs,
                states: &states,
                noise: &noise,
                action_box: self.action_box,
            };
            let policy = &m.pair.policies[p];
            let mut g = Graph::new();
            let pb = policy.params.bind(&mut g, true);
            let frozen = FrozenModels {
                phi: &m.phi,
                clone: &m.clone,
                inverse: &m.inverse,
            };
            let nodes = reward_nodes(&mut g, policy, &pb, &batch, frozen)?;
            let mut weights = self.weights;
            weights.log_w_h = m.log_w_h();
            let loss = policy_objective(&mut g, nodes, &weights)?;
            log_probs.extend(g.value(nodes.log_prob).iter().copied());
            policies.push(LossGraph { graph: g, loss, trained: vec![pb] });
        }

        let temperature = {
            let mut g = Graph::new();
            let tb = m.temperature.bind(&mut g, true);
            let loss = temperature_objective(&mut g, tb.ids[0], &log_probs, self.weights.target_entropy)?;
            LossGraph { graph: g, loss, trained: vec![tb] }
        };
        let second = policies.pop().expect("two policies");
        let first = policies.pop().expect("two policies");
        Ok(Some(IntervalGraphs {
            inverse,
            policies: [first, second],
            temperature,
        }))
    }

    /// Inverse model, both policies and the temperature from the delayed
    /// history, then a clone sync. `None` when history is too short.
    pub fn update_interval_models(&mut self) -> Result<Option<IntervalLosses>> {
        let Some(IntervalGraphs {
            mut inverse,
            mut policies,
            mut temperature,
        }) = self.interval_losses()?
        else {
            log::info!(
                "step {}: skipping interval update ({} of {} history steps)",
                self.step,
                self.history.len(),
                self.schedule.history_depth()
            );
            self.skipped_interval_updates += 1;
            return Ok(None);
        };
        let m = &mut self.models;
        let grads = inverse.backward()?;
        let gr = m.inverse.params.collect_grads(&grads, &inverse.trained[0])?;
        m.inverse_adam.update(&mut m.inverse.params, &gr)?;
        for (p, lg) in policies.iter_mut().enumerate() {
            let grads = lg.backward()?;
            let gr = m.pair.policies[p].params.collect_grads(&grads, &lg.trained[0])?;
            m.pair.optimizers[p].update(&mut m.pair.policies[p].params, &gr)?;
        }
        let grads = temperature.backward()?;
        let gr = m.temperature.collect_grads(&grads, &temperature.trained[0])?;
        m.temperature_adam.update(&mut m.temperature, &gr)?;
        m.clone.sync(&m.phi)?;
        self.interval_updates += 1;
        Ok(Some(IntervalLosses {
            inverse: inverse.value(),
            policy: [policies[0].value(), policies[1].value()],
            temperature: temperature.value(),
        }))
    }

    /// Re-initializes the policy with the lower window score.
    pub fn maybe_reset_policy(&mut self) -> Option<ResetEvent> {
        let pair = &mut self.models.pair;
        if pair.score_counts.contains(&0) {
            return None;
        }
        let scores = pair.scores();
        let policy = policy_to_reset(scores);
        let seed = rngs::stream_seed(self.cfg.seed, &format!("policy-reset:{}", self.step));
        pair.reset(policy, seed);
        let event = ResetEvent {
            step: self.step,
            policy,
            scores,
        };
        log::info!("step {}: reset policy {} (scores {:?})", self.step, policy + 1, scores);
        self.resets.push(event);
        Some(event)
    }

    /// One full iteration of the loop.
    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let batch = self.act()?;
        let (loss, next_states) = self.update_phi_omega(&batch)?;
        let learn_policies = self.cfg.ablation != Ablation::Random;
        if learn_policies {
            // rewards use φ before this step's update, matching the acting
            // phase; the clone and inverse model are unchanged by it
            let samples = self.reward_samples(&batch, &next_states)?;
            let pair = &mut self.models.pair;
            for smp in &samples {
                pair.score_sums[smp.policy] +=
                    self.cfg.w_inverse * smp.r_inverse + self.cfg.w_lpb * smp.r_lpb;
                pair.score_counts[smp.policy] += 1;
            }
            self.last_rewards = samples;
        }
        self.push_tail(&batch);
        self.history.push(StepRecord {
            obs: batch.obs,
            states: batch.states,
            actions: batch.actions,
            executed: batch.executed.clone(),
            noise: batch.noise,
            next_states: next_states.clone(),
            next_obs: batch.next_obs.clone(),
        });
        self.obs = batch.next_obs;
        self.states = next_states;
        for slot in 0..self.schedule.agents {
            if batch.done[slot] {
                let o = self.envs[slot].reset(Mode::Srl, &mut self.env_rngs[slot]);
                self.obs.row_mut(slot).assign(&ndarray::ArrayView1::from(&o));
                let fresh = draw_latent(&mut self.latent_rng, 1, self.dims.state);
                self.states.row_mut(slot).assign(&fresh.row(0));
            }
        }
        self.step += 1;
        self.models.clone.tick();
        self.track_positions();

        let mut interval = None;
        if learn_policies && self.step % self.schedule.update_interval == 0 {
            interval = self.update_interval_models()?;
        }
        if learn_policies && self.step % self.schedule.reset_interval == 0 {
            self.maybe_reset_policy();
        }
        let scores = learn_policies.then(|| self.models.pair.scores());
        Ok(StepMetrics {
            version: METRICS_VERSION,
            env: self.cfg.env,
            step: self.step,
            loss_phi_omega: loss,
            loss_i: interval.map(|l| l.inverse),
            loss_pi1: interval.map(|l| l.policy[0]),
            loss_pi2: interval.map(|l| l.policy[1]),
            w_h: self.models.log_w_h().exp(),
            cum_score_1: scores.map(|s| s[0]),
            cum_score_2: scores.map(|s| s[1]),
            coverage: self.coverage(),
            reached_far_end_step: self.far_end_step,
        })
    }

    fn push_tail(&mut self, batch: &ActBatch) {
        for r in 0..batch.obs.nrows() {
            if self.train_tail.len() == TRAIN_TAIL {
                self.train_tail.pop_front();
            }
            self.train_tail.push_back([
                batch.obs.row(r).to_vec(),
                batch.states.row(r).to_vec(),
                batch.executed.row(r).to_vec(),
                batch.next_obs.row(r).to_vec(),
            ]);
        }
    }

    /// The most recent training transitions with the latent states used
    /// for them: `(obs, states, actions, next_obs)`.
    pub fn train_tail(&self) -> [Array2<f64>; 4] {
        let n = self.train_tail.len();
        let widths = [self.dims.obs, self.dims.state, self.dims.action, self.dims.obs];
        let mut out = widths.map(|w| Array2::zeros((n, w)));
        for (r, row) in self.train_tail.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                out[k].row_mut(r).assign(&ndarray::ArrayView1::from(v));
            }
        }
        out
    }

    pub fn checkpoint(&self) -> Result<Container> {
        let meta = serde_json::json!({
            "config": self.cfg,
            "step": self.step,
            "obs_dim": self.dims.obs,
            "action_dim": self.dims.action,
            "state_dim": self.dims.state,
            "reached_far_end_step": self.far_end_step,
            "resets": self.resets,
        });
        let mut c = Container::new(MODEL_KIND, meta);
        for p in self.models.all_params() {
            c.push_params(p);
        }
        let m = &self.models;
        for (p, a) in m.phi.param_sets().iter().zip(&m.phi_adam) {
            c.push_adam(p, a);
        }
        c.push_adam(&m.omega.params, &m.omega_adam);
        c.push_adam(&m.inverse.params, &m.inverse_adam);
        for (pi, a) in m.pair.policies.iter().zip(&m.pair.optimizers) {
            c.push_adam(&pi.params, a);
        }
        c.push_adam(&m.temperature, &m.temperature_adam);
        Ok(c)
    }

    pub fn train_set(&self) -> Container {
        let [obs, states, actions, next_obs] = self.train_tail();
        let mut c = Container::new(
            TRAINSET_KIND,
            serde_json::json!({"env": self.cfg.env, "step": self.step}),
        );
        c.push("obs", obs);
        c.push("states", states);
        c.push("act", actions);
        c.push("next_obs", next_obs);
        c
    }
}

pub const MODEL_KIND: &str = "xsrl-model";
pub const TRAINSET_KIND: &str = "xsrl-trainset";

pub fn draw_latent<R: Rng + ?Sized>(rng: &mut R, rows: usize, dim: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, LATENT_INIT_STD).expect("valid std");
    Array2::from_shape_fn((rows, dim), |_| normal.sample(rng))
}

/// Models restored from a pretraining checkpoint.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub config: RunConfig,
    pub step: u64,
    pub phi: StateEstimator,
    pub omega: DenseModel,
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let c = Container::load(path)?;
    model_from_container(&c, path)
}

pub fn model_from_container(c: &Container, path: &Path) -> Result<LoadedModel> {
    if c.kind != MODEL_KIND {
        return Err(XsrlError::checkpoint(path, format!("expected a `{MODEL_KIND}` container, found `{}`", c.kind)));
    }
    let config: RunConfig = serde_json::from_value(c.meta["config"].clone())
        .map_err(|e| XsrlError::checkpoint(path, format!("bad config snapshot: {e}")))?;
    let spec = Env::spec_for(config.env);
    let dims = ModelDims {
        obs: spec.obs_dim,
        action: spec.action_dim,
        state: config.state_dim,
    };
    let mut phi = StateEstimator::zeros(dims, &config.nets);
    for set in phi.param_sets_mut() {
        c.load_params(set)?;
    }
    let mut omega = DenseModel::zeros("omega", dims.state, &config.nets.omega_hidden, dims.obs);
    c.load_params(&mut omega.params)?;
    Ok(LoadedModel {
        step: c.meta["step"].as_u64().unwrap_or(0),
        config,
        phi,
        omega,
    })
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }
    pub fn events(&self) -> PathBuf {
        self.dir.join("events.jsonl")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.json")
    }
    pub fn latest(&self) -> PathBuf {
        self.dir.join("latest.ckpt")
    }
    pub fn final_checkpoint(&self) -> PathBuf {
        self.dir.join("final.ckpt")
    }
    pub fn train_set(&self) -> PathBuf {
        self.dir.join("trainset.ckpt")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub reached_far_end_step: Option<u64>,
    pub coverage: Option<f64>,
    pub resets: usize,
    pub interval_updates: u64,
    pub final_checkpoint: PathBuf,
}

/// Runs pretraining for the configured budget, writing metrics, periodic
/// checkpoints, the final checkpoint and the train-set tail under
/// `cfg.out_dir`.
pub fn run_pretraining(cfg: &RunConfig) -> Result<RunSummary> {
    let paths = RunPaths::new(&cfg.out_dir);
    fs::create_dir_all(&paths.dir).map_err(|e| XsrlError::io(&paths.dir, e))?;
    fs::write(paths.config(), cfg.to_json()).map_err(|e| XsrlError::io(paths.config(), e))?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let open = |p: PathBuf| -> Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(&p).map_err(|e| XsrlError::io(&p, e))?))
    };
    let mut metrics = open(paths.metrics())?;
    let mut events = open(paths.events())?;
    let mut logged_resets = 0;
    while trainer.step_count() < cfg.steps {
        let m = trainer.train_step()?;
        serde_json::to_writer(&mut metrics, &m)?;
        metrics.write_all(b"\n").map_err(|e| XsrlError::io(paths.metrics(), e))?;
        for e in &trainer.resets[logged_resets..] {
            serde_json::to_writer(&mut events, e)?;
            events.write_all(b"\n").map_err(|e| XsrlError::io(paths.events(), e))?;
        }
        logged_resets = trainer.resets.len();
        if cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0 {
            trainer.checkpoint()?.save(&paths.latest())?;
        }
        if cfg.stop_at_far_end && m.reached_far_end_step.is_some() {
            log::info!("far end reached at step {}", m.step);
            break;
        }
    }
    metrics.flush().map_err(|e| XsrlError::io(paths.metrics(), e))?;
    events.flush().map_err(|e| XsrlError::io(paths.events(), e))?;
    trainer.checkpoint()?.save(&paths.final_checkpoint())?;
    trainer.train_set().save(&paths.train_set())?;
    Ok(RunSummary {
        steps: trainer.step_count(),
        reached_far_end_step: trainer.far_end_step(),
        coverage: trainer.coverage(),
        resets: trainer.resets.len(),
        interval_updates: trainer.interval_updates,
        final_checkpoint: paths.final_checkpoint(),
    })
}

/// Parses a metrics stream.
pub fn read_metrics(path: &Path) -> Result<Vec<StepMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| XsrlError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}
