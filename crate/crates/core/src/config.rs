//! Experiment configuration.
//!
//! Defaults reproduce the published hyperparameter tables; every field can
//! be overridden from a JSON or TOML file and then from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, XsrlError};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Maze,
    Pendulum,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Maze => "maze",
            EnvKind::Pendulum => "pendulum",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = XsrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maze" => Ok(EnvKind::Maze),
            "pendulum" => Ok(EnvKind::Pendulum),
            _ => Err(XsrlError::config("env", format!("unknown environment `{s}` (maze|pendulum)"))),
        }
    }
}

/// Which parts of the discovery objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Inverse-model error, learning-progress bonus and entropy.
    Full,
    /// Entropy term only.
    Maxent,
    /// Uniform random actions; no policy or inverse-model training.
    Random,
}

impl std::str::FromStr for Ablation {
    type Err = XsrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "xsrl" => Ok(Ablation::Full),
            "maxent" => Ok(Ablation::Maxent),
            "random" => Ok(Ablation::Random),
            _ => Err(XsrlError::config("ablation", format!("unknown ablation `{s}` (full|maxent|random)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Xsrl,
    GroundTruth,
    OpenLoop,
    Position,
    RandomNetwork,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Xsrl => "xsrl",
            EncoderKind::GroundTruth => "ground-truth",
            EncoderKind::OpenLoop => "open-loop",
            EncoderKind::Position => "position",
            EncoderKind::RandomNetwork => "random-network",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = XsrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xsrl" => Ok(EncoderKind::Xsrl),
            "ground-truth" => Ok(EncoderKind::GroundTruth),
            "open-loop" => Ok(EncoderKind::OpenLoop),
            "position" => Ok(EncoderKind::Position),
            "random-network" => Ok(EncoderKind::RandomNetwork),
            _ => Err(XsrlError::config(
                "transfer.encoder",
                format!("unknown encoder `{s}` (xsrl|ground-truth|open-loop|position|random-network)"),
            )),
        }
    }
}

/// Hidden-layer widths of every dense model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub alpha_hidden: Vec<usize>,
    pub alpha_out: usize,
    pub beta_hidden: Vec<usize>,
    pub gamma_hidden: Vec<usize>,
    pub omega_hidden: Vec<usize>,
    pub inverse_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            alpha_hidden: vec![128, 512],
            alpha_out: 30,
            beta_hidden: vec![128, 512, 32],
            gamma_hidden: vec![128, 512, 128],
            omega_hidden: vec![32, 256, 1024],
            inverse_hidden: vec![128, 512, 128],
            policy_hidden: vec![128, 512, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub phi: f64,
    pub omega: f64,
    pub inverse: f64,
    pub policy: f64,
    pub temperature: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            phi: 1e-4,
            omega: 1e-4,
            inverse: 1e-4,
            policy: 1e-4,
            temperature: 1e-4,
        }
    }
}

/// Soft actor-critic settings for the transfer phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub encoder: EncoderKind,
    /// Pretraining checkpoint holding the frozen estimator (xsrl encoder).
    pub encoder_checkpoint: Option<PathBuf>,
    pub steps: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub discount: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Critic updates between target syncs.
    pub target_update_every: u64,
    /// Polyak weight of each target sync; 1 is a hard copy.
    pub target_tau: f64,
    /// Critic updates between actor (and temperature) updates.
    pub actor_update_every: u64,
    pub init_temperature: f64,
    /// Uniform-random steps before the first update.
    pub warmup_steps: u64,
    pub updates_per_step: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    /// Output width of the random-network encoder.
    pub random_network_dim: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Xsrl,
            encoder_checkpoint: None,
            steps: 100_000,
            batch_size: 256,
            buffer_capacity: 100_000,
            discount: 0.99,
            lr: 5e-4,
            hidden: vec![128, 512, 128],
            target_update_every: 2,
            target_tau: 0.01,
            actor_update_every: 2,
            init_temperature: 0.1,
            warmup_steps: 1_000,
            updates_per_step: 1,
            eval_every: 5_000,
            eval_episodes: 10,
            final_eval_episodes: 100,
            random_network_dim: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub env: EnvKind,
    pub distractor: bool,
    /// Latent state dimension `S_d`.
    pub state_dim: usize,
    /// Number of parallel agents `B` (also the estimator batch size).
    pub batch_size: usize,
    /// Batch size `B_π` for the inverse model and policies.
    pub policy_batch_size: usize,
    /// `T_π`: environment steps between inverse-model/policy updates.
    pub update_interval: u64,
    /// `T_reset`: environment steps between policy reset evaluations.
    pub reset_interval: u64,
    pub w_inverse: f64,
    pub w_lpb: f64,
    /// Initial entropy temperature `w_H`.
    pub init_temperature: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub lr: LearningRates,
    pub nets: NetConfig,
    /// Rewardless episode length.
    pub srl_horizon: u64,
    /// Training-step budget of the pretraining run.
    pub steps: u64,
    pub seed: u64,
    pub ablation: Ablation,
    pub checkpoint_every: u64,
    /// End pretraining as soon as an agent reaches the far end of the maze.
    pub stop_at_far_end: bool,
    pub out_dir: PathBuf,
    pub transfer: TransferConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            env: EnvKind::Maze,
            distractor: false,
            state_dim: 20,
            batch_size: 32,
            policy_batch_size: 128,
            update_interval: 512,
            reset_interval: 4_096,
            w_inverse: 0.5,
            w_lpb: 1.0,
            init_temperature: 0.1,
            target_entropy: None,
            lr: LearningRates::default(),
            nets: NetConfig::default(),
            srl_horizon: 500,
            steps: 50_000,
            seed: 0,
            ablation: Ablation::Full,
            checkpoint_every: 10_000,
            stop_at_far_end: false,
            out_dir: PathBuf::from("runs/default"),
            transfer: TransferConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a JSON (`.json`) or TOML (anything else) config file. Missing
    /// fields take their defaults; unknown fields are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| XsrlError::io(path, e))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| XsrlError::config(path.display().to_string(), e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| XsrlError::config(path.display().to_string(), e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from a command-line style `key` and `value`. Keys are
    /// field paths (`lr.policy`, `transfer.steps`), dashes allowed, plus the
    /// short forms `encoder`, `checkpoint` and `transfer-steps`.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim_start_matches("--").replace('-', "_");
        let path = match key.as_str() {
            "encoder" => "transfer.encoder".to_string(),
            "checkpoint" | "encoder_checkpoint" => "transfer.encoder_checkpoint".to_string(),
            "transfer_steps" => "transfer.steps".to_string(),
            _ => key.clone(),
        };
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| XsrlError::config(&path, "unknown configuration key"))?;
        }
        // string fields take the raw text; everything else parses as JSON
        *slot = if slot.is_string() {
            serde_json::Value::String(value.to_string())
        } else {
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()))
        };
        *self = serde_json::from_value(root).map_err(|e| XsrlError::config(&path, e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(XsrlError::config("version", format!("unsupported version {}", self.version)));
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(XsrlError::config(
                "batch_size",
                format!("number of agents must be even and >= 2, got {}", self.batch_size),
            ));
        }
        if self.policy_batch_size < self.batch_size || self.policy_batch_size % self.batch_size != 0 {
            return Err(XsrlError::config(
                "policy_batch_size",
                format!(
                    "must be a positive multiple of batch_size ({}), got {}",
                    self.batch_size, self.policy_batch_size
                ),
            ));
        }
        if self.update_interval == 0 {
            return Err(XsrlError::config("update_interval", "must be positive"));
        }
        if self.reset_interval <= self.update_interval {
            return Err(XsrlError::config(
                "reset_interval",
                format!(
                    "must exceed update_interval ({}), got {}",
                    self.update_interval, self.reset_interval
                ),
            ));
        }
        if self.state_dim == 0 {
            return Err(XsrlError::config("state_dim", "must be positive"));
        }
        if self.init_temperature <= 0.0 {
            return Err(XsrlError::config("init_temperature", "must be positive"));
        }
        if self.srl_horizon == 0 {
            return Err(XsrlError::config("srl_horizon", "must be positive"));
        }
        let t = &self.transfer;
        if t.batch_size == 0 {
            return Err(XsrlError::config("transfer.batch_size", "must be positive"));
        }
        if t.buffer_capacity == 0 {
            return Err(XsrlError::config("transfer.buffer_capacity", "must be positive"));
        }
        if !(0.0..=1.0).contains(&t.discount) {
            return Err(XsrlError::config("transfer.discount", "must lie in [0, 1]"));
        }
        if t.target_update_every == 0 || t.actor_update_every == 0 {
            return Err(XsrlError::config("transfer.target_update_every", "update frequencies must be positive"));
        }
        if !(t.target_tau > 0.0 && t.target_tau <= 1.0) {
            return Err(XsrlError::config("transfer.target_tau", "must lie in (0, 1]"));
        }
        Ok(())
    }
}
