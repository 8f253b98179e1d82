//! Exploratory state representation learning: a recursive state estimator
//! trained jointly with curiosity-driven discovery policies, plus the
//! environments, transfer agent and evaluation used to study it.

pub mod checkpoint;
pub mod config;
pub mod envs;
pub mod error;
pub mod intrinsic;
pub mod metrics;
pub mod nets;
pub mod rngs;
pub mod trainer;
pub mod transfer;

pub use config::{Ablation, EncoderKind, EnvKind, NetConfig, RunConfig, TransferConfig};
pub use error::{Result, XsrlError};
