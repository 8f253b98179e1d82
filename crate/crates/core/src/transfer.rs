//! Downstream control with frozen state encoders: the baseline encoders,
//! a replay buffer and a compact soft actor-critic with double Q-learning
//! and automatic temperature.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use xsrl_autodiff::{mlp_layers, AdamConfig, AdamState, BoundParams, Graph, NodeId, ParamSet};

use crate::checkpoint::Container;
use crate::config::{EncoderKind, EnvKind, RunConfig, TransferConfig};
use crate::envs::{Env, Mode};
use crate::error::{check_dim, Result, XsrlError};
use crate::intrinsic::temperature_objective;
use crate::nets::{DenseModel, GaussianPolicy, StateEstimator};
use crate::rngs::{self, StreamRng};
use crate::trainer::{draw_latent, load_model};

pub const RANDOM_NETWORK_STD: f64 = 0.02;
/// Log-σ bounds of the actor before squashing.
pub const ACTOR_LOG_SIGMA: (f64, f64) = (-5.0, 2.0);

/// A frozen map from what the agent can see to the state handed to SAC.
#[derive(Debug, Clone)]
pub enum Encoder {
    Xsrl {
        phi: StateEstimator,
        latent: Option<Array2<f64>>,
        rng: StreamRng,
    },
    GroundTruth,
    OpenLoop {
        horizon: usize,
    },
    Position,
    RandomNetwork {
        net: ParamSet,
    },
}

impl Encoder {
    /// Builds the encoder named in `cfg.transfer`, loading the estimator
    /// checkpoint when needed.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let spec = Env::spec_for(cfg.env);
        Ok(match cfg.transfer.encoder {
            EncoderKind::Xsrl => {
                let path = cfg.transfer.encoder_checkpoint.as_ref().ok_or_else(|| {
                    XsrlError::config("transfer.encoder_checkpoint", "the xsrl encoder needs a pretraining checkpoint")
                })?;
                let model = load_model(path)?;
                if model.config.env != cfg.env {
                    return Err(XsrlError::checkpoint(
                        path,
                        format!("pretrained on {} but transfer runs on {}", model.config.env.name(), cfg.env.name()),
                    ));
                }
                if model.config.state_dim != cfg.state_dim {
                    return Err(XsrlError::checkpoint(
                        path,
                        format!(
                            "state dimension {} does not match the configured state_dim {}",
                            model.config.state_dim, cfg.state_dim
                        ),
                    ));
                }
                Self::xsrl(model.phi, rngs::stream(cfg.seed, "encoder-latent"))
            }
            EncoderKind::GroundTruth => Encoder::GroundTruth,
            EncoderKind::OpenLoop => Encoder::OpenLoop {
                horizon: spec.task_horizon,
            },
            EncoderKind::Position => Encoder::Position,
            EncoderKind::RandomNetwork => {
                let mut net = ParamSet::zeros(
                    "random_network",
                    mlp_layers(spec.obs_dim, &cfg.nets.alpha_hidden, cfg.transfer.random_network_dim),
                );
                net.gaussian(RANDOM_NETWORK_STD, &mut rngs::stream(cfg.seed, "init:random-network"));
                Encoder::RandomNetwork { net }
            }
        })
    }

    pub fn xsrl(phi: StateEstimator, rng: StreamRng) -> Self {
        Encoder::Xsrl { phi, latent: None, rng }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Xsrl { .. } => EncoderKind::Xsrl,
            Encoder::GroundTruth => EncoderKind::GroundTruth,
            Encoder::OpenLoop { .. } => EncoderKind::OpenLoop,
            Encoder::Position => EncoderKind::Position,
            Encoder::RandomNetwork { .. } => EncoderKind::RandomNetwork,
        }
    }

    pub fn dim(&self, env: EnvKind) -> usize {
        let spec = Env::spec_for(env);
        match self {
            Encoder::Xsrl { phi, .. } => phi.dims().state,
            Encoder::GroundTruth => spec.state_dim,
            Encoder::OpenLoop { .. } => 1,
            Encoder::Position => spec.obs_dim,
            Encoder::RandomNetwork { net } => net.layers().last().map_or(0, |l| l.output),
        }
    }

    /// Starts a new episode: the recurrent latent is redrawn.
    pub fn reset(&mut self) {
        if let Encoder::Xsrl { phi, latent, rng } = self {
            *latent = Some(draw_latent(rng, 1, phi.dims().state));
        }
    }

    /// State for observation `obs` at episode step `t`, after executing
    /// `a_prev` (zeros at `t = 0`).
    pub fn encode(&mut self, env: &Env, obs: &[f64], a_prev: &[f64], t: usize) -> Result<Vec<f64>> {
        let row = |v: &[f64]| ArrayView2::from_shape((1, v.len()), v).expect("row").to_owned();
        Ok(match self {
            Encoder::Xsrl { phi, latent, .. } => {
                let s = latent
                    .as_ref()
                    .ok_or_else(|| XsrlError::InvalidInput("xsrl encoder used before reset".into()))?;
                let next = phi.predict(row(obs).view(), s.view(), row(a_prev).view())?;
                let out = next.row(0).to_vec();
                *latent = Some(next);
                out
            }
            Encoder::GroundTruth => env.ground_truth(),
            Encoder::OpenLoop { horizon } => vec![t as f64 / *horizon as f64],
            Encoder::Position => obs.to_vec(),
            Encoder::RandomNetwork { net } => net.infer(row(obs).view())?.row(0).to_vec(),
        })
    }

    /// Parameters that must stay frozen, for integrity checks.
    pub fn frozen_params(&self) -> Vec<&ParamSet> {
        match self {
            Encoder::Xsrl { phi, .. } => phi.param_sets().to_vec(),
            Encoder::RandomNetwork { net } => vec![net],
            _ => Vec::new(),
        }
    }
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    states: Array2<f64>,
    actions: Array2<f64>,
    rewards: Vec<f64>,
    next_states: Array2<f64>,
    terminals: Vec<f64>,
    len: usize,
    cursor: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_states: Array2<f64>,
    pub terminals: Array2<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        Self {
            capacity,
            states: Array2::zeros((capacity, state_dim)),
            actions: Array2::zeros((capacity, action_dim)),
            rewards: vec![0.0; capacity],
            next_states: Array2::zeros((capacity, state_dim)),
            terminals: vec![0.0; capacity],
            len: 0,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, s: &[f64], a: &[f64], r: f64, s2: &[f64], terminal: bool) -> Result<()> {
        check_dim("replay state", self.states.ncols(), s.len())?;
        check_dim("replay action", self.actions.ncols(), a.len())?;
        check_dim("replay next state", self.states.ncols(), s2.len())?;
        let i = self.cursor;
        self.states.row_mut(i).assign(&ndarray::ArrayView1::from(s));
        self.actions.row_mut(i).assign(&ndarray::ArrayView1::from(a));
        self.rewards[i] = r;
        self.next_states.row_mut(i).assign(&ndarray::ArrayView1::from(s2));
        self.terminals[i] = if terminal { 1.0 } else { 0.0 };
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Rewards currently stored, oldest first.
    pub fn rewards_in_order(&self) -> Vec<f64> {
        let start = if self.len < self.capacity { 0 } else { self.cursor };
        (0..self.len).map(|k| self.rewards[(start + k) % self.capacity]).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<ReplayBatch> {
        if self.len == 0 {
            return Err(XsrlError::InvalidInput("cannot sample from an empty replay buffer".into()));
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len)).collect();
        Ok(ReplayBatch {
            states: self.states.select(Axis(0), &idx),
            actions: self.actions.select(Axis(0), &idx),
            rewards: Array2::from_shape_fn((n, 1), |(r, _)| self.rewards[idx[r]]),
            next_states: self.next_states.select(Axis(0), &idx),
            terminals: Array2::from_shape_fn((n, 1), |(r, _)| self.terminals[idx[r]]),
        })
    }
}

/// Actor, twin critics with Polyak-averaged targets and the temperature.
#[derive(Debug, Clone)]
pub struct Sac {
    pub actor: GaussianPolicy,
    pub critics: [DenseModel; 2],
    pub targets: [DenseModel; 2],
    /// Single entry `log_alpha`.
    pub temperature: ParamSet,
    actor_adam: AdamState,
    critic_adam: [AdamState; 2],
    temperature_adam: AdamState,
    pub target_entropy: f64,
    pub updates: u64,
    target_every: u64,
    target_tau: f64,
    actor_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: Option<f64>,
    pub temperature: Option<f64>,
}

/// `log(1 − tanh(u)²)` summed over columns, via `2(ln 2 − u − softplus(−2u))`.
fn squash_correction(g: &mut Graph, u: NodeId) -> Result<NodeId> {
    let neg = g.scale(u, -2.0)?;
    let sp = g.softplus(neg)?;
    let t = g.add(u, sp)?;
    let per = g.scale(t, -2.0)?;
    let per = g.add_scalar(per, 2.0 * std::f64::consts::LN_2)?;
    Ok(g.sum_cols(per)?)
}

fn squash_correction_value(u: f64) -> f64 {
    let sp = if -2.0 * u > 30.0 { -2.0 * u } else { (-2.0 * u).exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - sp)
}

impl Sac {
    pub fn new(state_dim: usize, action_dim: usize, t: &TransferConfig, seed: u64) -> Self {
        let actor = GaussianPolicy::new(
            "actor",
            state_dim,
            &t.hidden,
            action_dim,
            ACTOR_LOG_SIGMA,
            &mut rngs::stream(seed, "init:actor"),
        );
        let critic = |name: &str| DenseModel::new(name, state_dim + action_dim, &t.hidden, 1, &mut rngs::stream(seed, &format!("init:{name}")));
        let critics = [critic("q1"), critic("q2")];
        let mut targets = [
            DenseModel::zeros("q1_target", state_dim + action_dim, &t.hidden, 1),
            DenseModel::zeros("q2_target", state_dim + action_dim, &t.hidden, 1),
        ];
        for (tg, c) in targets.iter_mut().zip(&critics) {
            tg.params.copy_from(&c.params).expect("same layout");
        }
        let temperature = ParamSet::from_entries(
            "sac_temperature",
            vec![("log_alpha".into(), Array2::from_elem((1, 1), t.init_temperature.ln()))],
        );
        let adam = AdamConfig::with_lr(t.lr);
        Self {
            actor_adam: AdamState::new(adam, &actor.params),
            critic_adam: [AdamState::new(adam, &critics[0].params), AdamState::new(adam, &critics[1].params)],
            temperature_adam: AdamState::new(adam, &temperature),
            actor,
            critics,
            targets,
            temperature,
            target_entropy: -(action_dim as f64),
            updates: 0,
            target_every: t.target_update_every,
            target_tau: t.target_tau,
            actor_every: t.actor_update_every,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.temperature.entries()[0].1[[0, 0]].exp()
    }

    /// Squashed actions and log-densities for given noise, without a graph.
    pub fn sample_values(&self, s: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
        let (u, log_pu) = self.actor.act(s, noise)?;
        let a = u.mapv(f64::tanh);
        let logp = (0..u.nrows())
            .map(|r| log_pu[[r, 0]] - u.row(r).iter().map(|&x| squash_correction_value(x)).sum::<f64>())
            .collect();
        Ok((a, logp))
    }

    /// Deterministic action `tanh(μ(s))`, in `[-1, 1]`.
    pub fn greedy(&self, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.actor.distribution(s)?.0.mapv(f64::tanh))
    }

    /// Squashed reparametrized sample inside a graph: `(action, log π)`.
    pub fn sample_graph(&self, g: &mut Graph, b: &BoundParams, s: NodeId, noise: NodeId) -> Result<(NodeId, NodeId)> {
        let sample = self.actor.sample(g, b, s, noise)?;
        let a = g.tanh(sample.action)?;
        let corr = squash_correction(g, sample.action)?;
        let logp = g.sub(sample.log_prob, corr)?;
        Ok((a, logp))
    }

    pub fn q_values(models: &[DenseModel; 2], s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<[Array2<f64>; 2]> {
        let x = concatenate(Axis(1), &[s, a]).map_err(|_| XsrlError::InvalidInput("state/action rows differ".into()))?;
        Ok([models[0].predict(x.view())?, models[1].predict(x.view())?])
    }

    /// Bellman targets `r + γ(1 − d)(min Q̄(s′, a′) − α log π(a′|s′))`.
    pub fn targets_for(&self, batch: &ReplayBatch, discount: f64, noise: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (a2, logp2) = self.sample_values(batch.next_states.view(), noise)?;
        let [q1, q2] = Self::q_values(&self.targets, batch.next_states.view(), a2.view())?;
        let alpha = self.alpha();
        Ok(Array2::from_shape_fn((batch.rewards.nrows(), 1), |(r, _)| {
            let soft = q1[[r, 0]].min(q2[[r, 0]]) - alpha * logp2[r];
            batch.rewards[[r, 0]] + discount * (1.0 - batch.terminals[[r, 0]]) * soft
        }))
    }

    /// One critic step; every `actor_every` updates also an actor and a
    /// temperature step; every `target_every` updates a Polyak target sync.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &ReplayBatch, discount: f64, rng: &mut R) -> Result<SacLosses> {
        let n = batch.states.nrows();
        let a_dim = self.actor.action_dim();
        let mut noise = || Array2::from_shape_fn((n, a_dim), |_| StandardNormal.sample(&mut *rng));
        let y = self.targets_for(batch, discount, noise().view())?;

        let critic_loss;
        {
            let mut g = Graph::new();
            let x = g.constant(
                concatenate(Axis(1), &[batch.states.view(), batch.actions.view()]).expect("same rows"),
            );
            let yt = g.constant(y);
            let b0 = self.critics[0].params.bind(&mut g, true);
            let b1 = self.critics[1].params.bind(&mut g, true);
            let q0 = self.critics[0].forward(&mut g, &b0, x)?;
            let q1 = self.critics[1].forward(&mut g, &b1, x)?;
            let l0 = g.mean_squared_error(q0, yt)?;
            let l1 = g.mean_squared_error(q1, yt)?;
            let loss = g.add(l0, l1)?;
            critic_loss = g.scalar_value(loss);
            let grads = g.backward(loss)?;
            for (i, b) in [b0, b1].iter().enumerate() {
                let gr = self.critics[i].params.collect_grads(&grads, b)?;
                self.critic_adam[i].update(&mut self.critics[i].params, &gr)?;
            }
        }
        self.updates += 1;

        let mut out = SacLosses {
            critic: critic_loss,
            actor: None,
            temperature: None,
        };
        if self.updates % self.actor_every == 0 {
            let eps = noise();
            let mut g = Graph::new();
            let ab = self.actor.params.bind(&mut g, true);
            let s = g.constant(batch.states.clone());
            let e = g.constant(eps);
            let (a, logp) = self.sample_graph(&mut g, &ab, s, e)?;
            let x = g.concat(&[s, a])?;
            let b0 = self.critics[0].params.bind(&mut g, false);
            let b1 = self.critics[1].params.bind(&mut g, false);
            let q0 = self.critics[0].forward(&mut g, &b0, x)?;
            let q1 = self.critics[1].forward(&mut g, &b1, x)?;
            let q = g.minimum(q0, q1)?;
            let ent = g.scale(logp, self.alpha())?;
            let per = g.sub(ent, q)?;
            let loss = g.mean_rows(per)?;
            out.actor = Some(g.scalar_value(loss));
            let logps: Vec<f64> = g.value(logp).iter().copied().collect();
            let grads = g.backward(loss)?;
            let gr = self.actor.params.collect_grads(&grads, &ab)?;
            self.actor_adam.update(&mut self.actor.params, &gr)?;

            let mut tg = Graph::new();
            let tb = self.temperature.bind(&mut tg, true);
            let tl = temperature_objective(&mut tg, tb.ids[0], &logps, self.target_entropy)?;
            out.temperature = Some(tg.scalar_value(tl));
            let tgrads = tg.backward(tl)?;
            let gr = self.temperature.collect_grads(&tgrads, &tb)?;
            self.temperature_adam.update(&mut self.temperature, &gr)?;
        }
        if self.updates % self.target_every == 0 {
            let tau = self.target_tau;
            for (t, c) in self.targets.iter_mut().zip(&self.critics) {
                for (tv, cv) in t.params.values_mut().zip(c.params.values()) {
                    tv.zip_mut_with(cv, |x, &y| *x = tau * y + (1.0 - tau) * *x);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    /// Fraction of episodes that reached the goal (maze).
    pub success_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_step: u64,
    pub mean_return_10ep: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub encoder: EncoderKind,
    pub env: EnvKind,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub final_eval: EvalStats,
}

/// Maps an actor output in `[-1, 1]` onto the symmetric action box.
fn to_box(a: &[f64], high: &[f64]) -> Vec<f64> {
    a.iter().zip(high).map(|(x, h)| x * h).collect()
}

fn task_input(enc: &mut Encoder, env: &Env, obs: &[f64], a_prev: &[f64], t: usize) -> Result<Vec<f64>> {
    let mut s = enc.encode(env, obs, a_prev, t)?;
    s.extend(env.task_extra());
    Ok(s)
}

/// Greedy-policy episodes from task resets drawn from `rng`.
pub fn evaluate(sac: &Sac, encoder: &Encoder, env_kind: EnvKind, episodes: usize, rng: &mut StreamRng) -> Result<EvalStats> {
    let mut enc = encoder.clone();
    let mut env = Env::new(env_kind, false, rngs::stream(0, "eval-distractor"))?;
    let a_dim = env.spec().action_dim;
    let scale = env.spec().action_high.clone();
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = 0;
    for _ in 0..episodes {
        let obs = env.reset(Mode::Task, rng);
        enc.reset();
        let mut s = task_input(&mut enc, &env, &obs, &vec![0.0; a_dim], 0)?;
        let mut total = 0.0;
        let mut reached = false;
        loop {
            let a = sac.greedy(ArrayView2::from_shape((1, s.len()), &s).expect("row"))?;
            let step = env.step(&to_box(a.row(0).as_slice().expect("contiguous"), &scale))?;
            total += step.reward;
            reached |= step.at_goal;
            if step.done {
                if reached {
                    successes += 1;
                }
                break;
            }
            s = task_input(&mut enc, &env, &step.obs, &step.executed, env.elapsed())?;
        }
        returns.push(total);
    }
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalStats {
        episodes,
        mean_return: mean,
        std_return: var.sqrt(),
        success_rate: successes as f64 / n,
    })
}

/// Trains SAC on the task for `cfg.transfer.steps` environment steps with
/// the configured frozen encoder.
pub fn run_transfer_with(cfg: &RunConfig, mut encoder: Encoder) -> Result<(TransferResult, Sac)> {
    let t = &cfg.transfer;
    let mut env = Env::new(cfg.env, false, rngs::stream(cfg.seed, "transfer-distractor"))?;
    let spec = env.spec().clone();
    let state_dim = encoder.dim(cfg.env) + spec.task_extra_dim;
    let mut sac = Sac::new(state_dim, spec.action_dim, t, cfg.seed);
    let mut buffer = ReplayBuffer::new(t.buffer_capacity, state_dim, spec.action_dim);
    let mut env_rng = rngs::stream(cfg.seed, "transfer-env");
    let mut act_rng = rngs::stream(cfg.seed, "transfer-actions");
    let mut replay_rng = rngs::stream(cfg.seed, "replay");
    let mut update_rng = rngs::stream(cfg.seed, "sac-noise");
    let mut eval_rng = rngs::stream(cfg.seed, "transfer-eval");

    let zeros = vec![0.0; spec.action_dim];
    let mut obs = env.reset(Mode::Task, &mut env_rng);
    encoder.reset();
    let mut s = task_input(&mut encoder, &env, &obs, &zeros, 0)?;
    let mut curve = Vec::new();
    for step in 1..=t.steps {
        let action: Vec<f64> = if step <= t.warmup_steps {
            (0..spec.action_dim).map(|_| act_rng.random_range(-1.0..1.0)).collect()
        } else {
            let eps = Array2::from_shape_fn((1, spec.action_dim), |_| StandardNormal.sample(&mut act_rng));
            let (a, _) = sac.sample_values(ArrayView2::from_shape((1, s.len()), &s).expect("row"), eps.view())?;
            a.row(0).to_vec()
        };
        let out = env.step(&to_box(&action, &spec.action_high))?;
        obs = out.obs;
        let s2 = task_input(&mut encoder, &env, &obs, &out.executed, env.elapsed())?;
        buffer.push(&s, &action, out.reward, &s2, out.terminal)?;
        s = s2;
        if out.done {
            obs = env.reset(Mode::Task, &mut env_rng);
            encoder.reset();
            s = task_input(&mut encoder, &env, &obs, &zeros, 0)?;
        }
        if step > t.warmup_steps {
            for _ in 0..t.updates_per_step {
                let batch = buffer.sample(t.batch_size, &mut replay_rng)?;
                sac.update(&batch, t.discount, &mut update_rng)?;
            }
        }
        if t.eval_every > 0 && step % t.eval_every == 0 {
            let e = evaluate(&sac, &encoder, cfg.env, t.eval_episodes, &mut eval_rng)?;
            log::info!("{} step {step}: return {:.3} success {:.2}", t.encoder.name(), e.mean_return, e.success_rate);
            curve.push(CurvePoint {
                env_step: step,
                mean_return_10ep: e.mean_return,
                success_rate: e.success_rate,
            });
        }
    }
    let final_eval = evaluate(&sac, &encoder, cfg.env, t.final_eval_episodes, &mut rngs::stream(cfg.seed, "final-eval"))?;
    let result = TransferResult {
        encoder: encoder.kind(),
        env: cfg.env,
        seed: cfg.seed,
        curve,
        final_eval,
    };
    Ok((result, sac))
}

/// Builds the encoder from the config, trains, and writes the learning
/// curve, summary and trained actor under `cfg.out_dir`.
pub fn run_transfer(cfg: &RunConfig) -> Result<TransferResult> {
    let encoder = Encoder::from_config(cfg)?;
    let (result, sac) = run_transfer_with(cfg, encoder)?;
    write_transfer(&cfg.out_dir, &result)?;
    actor_container(&sac, cfg).save(&cfg.out_dir.join(ACTOR_FILE))?;
    Ok(result)
}

pub const ACTOR_KIND: &str = "sac-actor";
pub const ACTOR_FILE: &str = "actor.ckpt";

pub fn actor_container(sac: &Sac, cfg: &RunConfig) -> Container {
    let mut c = Container::new(
        ACTOR_KIND,
        serde_json::json!({
            "env": cfg.env,
            "encoder": cfg.transfer.encoder,
            "hidden": cfg.transfer.hidden,
            "input_dim": sac.actor.input_dim(),
            "action_dim": sac.actor.action_dim(),
        }),
    );
    c.push_params(&sac.actor.params);
    c
}

/// A trained actor acting greedily, as restored from `actor.ckpt`.
#[derive(Debug, Clone)]
pub struct LoadedActor {
    pub env: EnvKind,
    pub encoder: EncoderKind,
    pub actor: GaussianPolicy,
}

impl LoadedActor {
    /// `tanh(μ(s))` scaled to the environment's action box.
    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        let spec = Env::spec_for(self.env);
        let (mean, _) = self.actor.distribution(ArrayView2::from_shape((1, s.len()), s).expect("row"))?;
        Ok(mean
            .row(0)
            .iter()
            .enumerate()
            .map(|(j, &m)| spec.action_high[j] * m.tanh())
            .collect())
    }
}

pub fn load_actor(path: &Path) -> Result<LoadedActor> {
    let c = Container::load(path)?;
    if c.kind != ACTOR_KIND {
        return Err(XsrlError::checkpoint(path, format!("expected a `{ACTOR_KIND}` container, found `{}`", c.kind)));
    }
    let field = |k: &str| c.meta.get(k).cloned().ok_or_else(|| XsrlError::checkpoint(path, format!("missing `{k}`")));
    let bad = |e: serde_json::Error| XsrlError::checkpoint(path, e.to_string());
    let env: EnvKind = serde_json::from_value(field("env")?).map_err(bad)?;
    let encoder: EncoderKind = serde_json::from_value(field("encoder")?).map_err(bad)?;
    let hidden: Vec<usize> = serde_json::from_value(field("hidden")?).map_err(bad)?;
    let input: usize = serde_json::from_value(field("input_dim")?).map_err(bad)?;
    let action: usize = serde_json::from_value(field("action_dim")?).map_err(bad)?;
    let mut actor = GaussianPolicy::zeros("actor", input, &hidden, action, ACTOR_LOG_SIGMA);
    c.load_params(&mut actor.params)?;
    Ok(LoadedActor { env, encoder, actor })
}

pub fn write_transfer(dir: &Path, result: &TransferResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| XsrlError::io(dir, e))?;
    let curve_path = dir.join("transfer_curve.jsonl");
    let mut f = fs::File::create(&curve_path).map_err(|e| XsrlError::io(&curve_path, e))?;
    for p in &result.curve {
        serde_json::to_writer(&mut f, p)?;
        f.write_all(b"\n").map_err(|e| XsrlError::io(&curve_path, e))?;
    }
    let summary = dir.join("transfer_summary.json");
    fs::write(&summary, serde_json::to_string_pretty(result)?).map_err(|e| XsrlError::io(&summary, e))?;
    Ok(())
}
