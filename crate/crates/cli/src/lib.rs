//! Experiment orchestration for the `drip` binary.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use drip_core::data::DataError;
use drip_core::encoder::EncoderError;
use drip_core::evaluation::EvalError;
use drip_core::inference::InferenceError;
use drip_core::model::ModelError;
use drip_core::training::TrainError;
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing {path}: run `drip {stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "drip", version, about = "Multi-domain recommendation experiments")]
pub struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; beats `DRIP_OUT_DIR` and the config's `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic interaction file.
    GenSynthetic,
    /// Filter the interactions and hide domains for evaluation.
    Split,
    /// Train one embedding encoder per domain.
    TrainEncoders,
    /// Train the masked multi-domain model.
    TrainDrip,
    /// Score test users with the trained model.
    Evaluate,
    /// Train and evaluate one ablation variant.
    Ablate {
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run the full pipeline for every value of one config key.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        grid: Vec<String>,
        /// Metric record plotted against the axis.
        #[arg(long, default_value = "mt.recall@20")]
        metric: String,
    },
}

/// Builds the effective config: file, then `--set`, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.out_dir = cfg.resolve_out_dir(cli.out.as_deref());
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let run = commands::Run::new(cfg)?;
    match &cli.command {
        Command::GenSynthetic => run.gen_synthetic(),
        Command::Split => run.split(),
        Command::TrainEncoders => run.train_encoders(),
        Command::TrainDrip => run.train_drip(),
        Command::Evaluate => run.evaluate(),
        Command::Ablate { variant } => {
            let kind = match variant {
                Some(v) => v.parse().map_err(CliError::Usage)?,
                None => run.config().variant,
            };
            run.ablate(kind)
        }
        Command::Sweep { param, grid, metric } => run.sweep(param, grid, metric),
    }
}
