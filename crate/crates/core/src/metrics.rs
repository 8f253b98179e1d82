//! Held-out prediction error, exploration speed, return normalization and
//! CSV output for plotting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::config::EnvKind;
use crate::envs::{Env, TestDataset};
use crate::error::{check_dim, Result, XsrlError};
use crate::nets::{DenseModel, StateEstimator};
use crate::rngs;
use crate::trainer::{draw_latent, StepMetrics};

pub const TESTSET_KIND: &str = "xsrl-testset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    /// `None` when the far end was never reached.
    pub steps_to_far_end: Option<u64>,
    pub coverage: Option<f64>,
    pub normalized_returns: BTreeMap<String, f64>,
}

fn row(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("row view")
}

/// Mean `‖ω(φ(o, s, a)) − o′‖²` along the dataset's trajectories, rolling
/// the latent forward from a fresh `N(0, 0.02²)` draw at each trajectory
/// start. The latent draws come from `seed`, so repeated calls agree.
pub fn eval_prediction_error(phi: &StateEstimator, omega: &DenseModel, data: &TestDataset, seed: u64) -> Result<f64> {
    data.validate()?;
    if data.is_empty() {
        return Err(XsrlError::InvalidInput("prediction error over an empty dataset".into()));
    }
    let dims = phi.dims();
    let spec = Env::spec_for(data.env);
    check_dim("dataset observation vs model", dims.obs, spec.obs_dim)?;
    check_dim("decoder output", dims.obs, omega.output_dim())?;
    let mut rng = rngs::stream(seed, "eval-latent");
    let mut s = draw_latent(&mut rng, 1, dims.state);
    let mut total = 0.0;
    for i in 0..data.len() {
        check_dim("dataset observation", dims.obs, data.obs[i].len())?;
        check_dim("dataset action", dims.action, data.actions[i].len())?;
        check_dim("dataset next observation", dims.obs, data.next_obs[i].len())?;
        if data.traj_start[i] && i > 0 {
            s = draw_latent(&mut rng, 1, dims.state);
        }
        let next = phi.predict(row(&data.obs[i]), s.view(), row(&data.actions[i]))?;
        let pred = omega.predict(next.view())?;
        total += pred.iter().zip(&data.next_obs[i]).map(|(p, o)| (p - o).powi(2)).sum::<f64>();
        s = next;
    }
    Ok(total / data.len() as f64)
}

/// Same error on logged training transitions, using the latent states
/// recorded with them.
pub fn eval_train_error(phi: &StateEstimator, omega: &DenseModel, train: &Container) -> Result<f64> {
    let obs = train.require("obs")?;
    let states = train.require("states")?;
    let act = train.require("act")?;
    let next = train.require("next_obs")?;
    if obs.nrows() == 0 {
        return Err(XsrlError::InvalidInput("train set is empty".into()));
    }
    let pred = omega.predict(phi.predict(obs.view(), states.view(), act.view())?.view())?;
    Ok((&pred - next).mapv(|x| x * x).sum() / obs.nrows() as f64)
}

/// First step at which an agent entered the far end, from a maze metrics
/// stream; `None` when it never happened.
pub fn exploration_speed(log: &[StepMetrics]) -> Result<Option<u64>> {
    if let Some(m) = log.iter().find(|m| m.env != EnvKind::Maze) {
        return Err(XsrlError::InvalidInput(format!(
            "exploration speed needs a maze log, found {}",
            m.env.name()
        )));
    }
    Ok(log.iter().find_map(|m| m.reached_far_end_step))
}

/// `x ↦ (x − lower)/(upper − lower)` for every method.
pub fn normalize_returns(raw: &BTreeMap<String, f64>, upper: f64, lower: f64) -> Result<BTreeMap<String, f64>> {
    if !(upper > lower) {
        return Err(XsrlError::InvalidInput(format!(
            "normalization needs upper > lower, got upper {upper} and lower {lower}"
        )));
    }
    Ok(raw.iter().map(|(k, &x)| (k.clone(), (x - lower) / (upper - lower))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrorRow {
    pub method: String,
    pub split: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRow {
    pub method: String,
    pub seed: u64,
    /// Empty when never reached.
    pub steps_to_far_end: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub seed: u64,
    pub env_step: u64,
    #[serde(rename = "return")]
    pub ret: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub prediction_error: Vec<PredictionErrorRow>,
    pub exploration: Vec<ExplorationRow>,
    pub transfer_curves: Vec<CurveRow>,
}

pub const PLOT_FILES: [&str; 3] = ["prediction_error.csv", "exploration.csv", "transfer_curves.csv"];

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| XsrlError::io(path, std::io::Error::other(e)))?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| XsrlError::io(path, e))?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| XsrlError::io(path, std::io::Error::other(e)))?;
    r.deserialize().map(|row| row.map_err(XsrlError::from)).collect()
}

/// Writes the three CSV files into `dir`, returning their paths.
pub fn emit_plot_data(data: &PlotData, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| XsrlError::io(dir, e))?;
    let paths: Vec<PathBuf> = PLOT_FILES.iter().map(|f| dir.join(f)).collect();
    write_csv(&paths[0], &["method", "split", "error"], &data.prediction_error)?;
    write_csv(&paths[1], &["method", "seed", "steps_to_far_end"], &data.exploration)?;
    write_csv(&paths[2], &["method", "seed", "env_step", "return"], &data.transfer_curves)?;
    Ok(paths)
}

pub fn read_plot_data(dir: &Path) -> Result<PlotData> {
    Ok(PlotData {
        prediction_error: read_csv(&dir.join(PLOT_FILES[0]))?,
        exploration: read_csv(&dir.join(PLOT_FILES[1]))?,
        transfer_curves: read_csv(&dir.join(PLOT_FILES[2]))?,
    })
}

fn stack(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), width), |(r, c)| rows[r][c])
}

/// Packs a dataset into a checkpoint container.
pub fn testset_container(data: &TestDataset) -> Result<Container> {
    data.validate()?;
    let spec = Env::spec_for(data.env);
    let mut c = Container::new(TESTSET_KIND, serde_json::json!({"env": data.env, "source": data.source}));
    c.push("obs", stack(&data.obs, spec.obs_dim));
    c.push("act", stack(&data.actions, spec.action_dim));
    c.push("next_obs", stack(&data.next_obs, spec.obs_dim));
    c.push(
        "traj_start",
        Array2::from_shape_fn((data.len(), 1), |(r, _)| if data.traj_start[r] { 1.0 } else { 0.0 }),
    );
    c.push("states", stack(&data.states, spec.state_dim));
    Ok(c)
}

pub fn save_testset(data: &TestDataset, path: &Path) -> Result<()> {
    testset_container(data)?.save(path)
}

pub fn load_testset(path: &Path) -> Result<TestDataset> {
    let c = Container::load(path)?;
    if c.kind != TESTSET_KIND {
        return Err(XsrlError::checkpoint(path, format!("expected a `{TESTSET_KIND}` container, found `{}`", c.kind)));
    }
    let env: EnvKind = serde_json::from_value(c.meta["env"].clone())
        .map_err(|e| XsrlError::checkpoint(path, format!("bad env tag: {e}")))?;
    let rows = |name: &str| -> Result<Vec<Vec<f64>>> { Ok(c.require(name)?.rows().into_iter().map(|r| r.to_vec()).collect()) };
    let data = TestDataset {
        env,
        source: c.meta["source"].as_str().unwrap_or_default().to_string(),
        obs: rows("obs")?,
        actions: rows("act")?,
        next_obs: rows("next_obs")?,
        traj_start: c.require("traj_start")?.iter().map(|&x| x != 0.0).collect(),
        states: rows("states")?,
    };
    data.validate().map_err(|e| XsrlError::checkpoint(path, e.to_string()))?;
    Ok(data)
}
