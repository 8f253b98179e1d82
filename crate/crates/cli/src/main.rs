use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xsrl_core::checkpoint::Container;
use xsrl_core::envs::{build_maze_dataset, build_pendulum_dataset};
use xsrl_core::metrics::{
    emit_plot_data, eval_prediction_error, eval_train_error, exploration_speed, load_testset, save_testset,
    CurveRow, ExplorationRow, PlotData, PredictionErrorRow,
};
use xsrl_core::trainer::{load_model, read_metrics, run_pretraining, RunPaths};
use xsrl_core::transfer::{load_actor, run_transfer, TransferResult};
use xsrl_core::{EncoderKind, EnvKind, RunConfig, XsrlError};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] XsrlError),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "xsrl", version, about = "Exploratory state representation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reward-free pretraining of the state estimator and discovery policies.
    Pretrain(RunArgs),
    /// SAC on the task with a frozen encoder.
    Transfer(RunArgs),
    /// Held-out (and optionally train-set) prediction error of a checkpoint.
    EvalPred(EvalPredArgs),
    /// Builds the 400-transition held-out dataset.
    MakeTestset(MakeTestsetArgs),
    /// Collects run directories into plot-ready CSV files.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON or TOML config file; `--key value` pairs override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Field overrides such as `--env pendulum --seed 3 --lr.policy 1e-3`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalPredArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    testset: PathBuf,
    /// Train-set container written by pretraining.
    #[arg(long)]
    train_set: Option<PathBuf>,
    /// Seed of the initial latent draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MakeTestsetArgs {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Actor trained by `transfer --encoder ground-truth` (pendulum only).
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Pretraining and transfer output directories.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Held-out dataset for the prediction-error table.
    #[arg(long)]
    testset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut it = args.overrides.iter().peekable();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument `{flag}`; overrides take the form --key value")));
        };
        let value = match it.peek() {
            Some(v) if !v.starts_with("--") => it.next().expect("peeked").clone(),
            _ => "true".to_string(),
        };
        cfg.apply_override(key, &value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pretrain(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let summary = run_pretraining(&cfg)?;
    println!(
        "{}",
        serde_json::json!({
            "steps": summary.steps,
            "reached_far_end_step": summary.reached_far_end_step,
            "coverage": summary.coverage,
            "resets": summary.resets,
            "interval_updates": summary.interval_updates,
            "checkpoint": summary.final_checkpoint,
        })
    );
    Ok(())
}

fn transfer(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let result = run_transfer(&cfg)?;
    println!("{}", serde_json::to_string(&result.final_eval).map_err(XsrlError::from)?);
    Ok(())
}

fn eval_pred(args: EvalPredArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let data = load_testset(&args.testset)?;
    if data.env != model.config.env {
        return Err(CliError::Usage(format!(
            "test set is for {} but the checkpoint was trained on {}",
            data.env.name(),
            model.config.env.name()
        )));
    }
    let test = eval_prediction_error(&model.phi, &model.omega, &data, args.seed)?;
    let train = match &args.train_set {
        Some(p) => Some(eval_train_error(&model.phi, &model.omega, &Container::load(p)?)?),
        None => None,
    };
    println!("{}", serde_json::json!({"test_error": test, "train_error": train}));
    Ok(())
}

fn make_testset(args: MakeTestsetArgs) -> Result<()> {
    let data = match args.env {
        EnvKind::Maze => build_maze_dataset(args.seed)?,
        EnvKind::Pendulum => {
            let path = args.policy.ok_or_else(|| {
                CliError::Usage(
                    "the pendulum test set needs --policy <actor.ckpt>; train one first with \
                     `xsrl transfer --env pendulum --encoder ground-truth`"
                        .into(),
                )
            })?;
            let actor = load_actor(&path)?;
            if actor.env != EnvKind::Pendulum || actor.encoder != EncoderKind::GroundTruth {
                return Err(CliError::Usage(format!(
                    "{} holds a {} actor on the {}; a ground-truth pendulum actor is required",
                    path.display(),
                    actor.encoder.name(),
                    actor.env.name()
                )));
            }
            build_pendulum_dataset(args.seed, |s| actor.act(s))?
        }
    };
    save_testset(&data, &args.out)?;
    println!("{} transitions written to {}", data.len(), args.out.display());
    Ok(())
}

fn method_name(cfg: &RunConfig) -> String {
    let base = match cfg.ablation {
        xsrl_core::Ablation::Full => "xsrl",
        xsrl_core::Ablation::Maxent => "xsrl-maxent",
        xsrl_core::Ablation::Random => "xsrl-random",
    };
    if cfg.distractor {
        format!("{base}-distractor")
    } else {
        base.to_string()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| XsrlError::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(XsrlError::from)?)
}

fn report(args: ReportArgs) -> Result<()> {
    let testset = args.testset.as_deref().map(load_testset).transpose()?;
    let mut data = PlotData::default();
    for dir in &args.runs {
        let paths = RunPaths::new(dir);
        let summary = dir.join("transfer_summary.json");
        if summary.exists() {
            let r: TransferResult = read_json(&summary)?;
            data.transfer_curves.extend(r.curve.iter().map(|p| CurveRow {
                method: r.encoder.name().to_string(),
                seed: r.seed,
                env_step: p.env_step,
                ret: p.mean_return_10ep,
            }));
        } else if paths.metrics().exists() {
            let cfg: RunConfig = read_json(&paths.config())?;
            let method = method_name(&cfg);
            if cfg.env == EnvKind::Maze {
                data.exploration.push(ExplorationRow {
                    method: method.clone(),
                    seed: cfg.seed,
                    steps_to_far_end: exploration_speed(&read_metrics(&paths.metrics())?)?,
                });
            }
            let model = load_model(&paths.final_checkpoint())?;
            if let Some(t) = testset.as_ref().filter(|t| t.env == cfg.env) {
                data.prediction_error.push(PredictionErrorRow {
                    method: method.clone(),
                    split: "test".into(),
                    error: eval_prediction_error(&model.phi, &model.omega, t, cfg.seed)?,
                });
            }
            if paths.train_set().exists() {
                data.prediction_error.push(PredictionErrorRow {
                    method,
                    split: "train".into(),
                    error: eval_train_error(&model.phi, &model.omega, &Container::load(&paths.train_set())?)?,
                });
            }
        } else {
            return Err(CliError::Usage(format!("{} is neither a pretraining nor a transfer run", dir.display())));
        }
    }
    for p in emit_plot_data(&data, &args.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Pretrain(a) => pretrain(a),
        Command::Transfer(a) => transfer(a),
        Command::EvalPred(a) => eval_pred(a),
        Command::MakeTestset(a) => make_testset(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `xsrl --help` for usage.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
