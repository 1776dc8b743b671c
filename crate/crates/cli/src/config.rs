//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use drip_core::encoder::BprConfig;
use drip_core::evaluation::{KldReference, DEFAULT_CUTOFFS};
use drip_core::training::TrainConfig;
use drip_core::variants::{SingleDomainConfig, VariantKind};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const OUT_DIR_ENV: &str = "DRIP_OUT_DIR";

/// Every key accepted in a config file or through `--set`.
pub const KEYS: &[&str] = &[
    "data",
    "synthetic",
    "min_overlap",
    "min_single",
    "hide_prob",
    "val_fraction",
    "encoder_dim",
    "encoder_epochs",
    "encoder_lr",
    "encoder_l2",
    "encoder_negatives",
    "encoder_batch_size",
    "rho",
    "lr",
    "weight_decay",
    "batch_size",
    "epochs",
    "layers",
    "heads",
    "width",
    "dropout",
    "seed",
    "schedule_floor",
    "schedule_slope",
    "patience",
    "variant",
    "cutoffs",
    "kld_reference",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Interaction file; `None` uses the output directory's generated data.
    pub data: Option<PathBuf>,
    pub synthetic: String,
    pub min_overlap: usize,
    pub min_single: usize,
    pub hide_prob: f64,
    pub val_fraction: f64,
    pub encoder: BprConfig,
    pub train: TrainConfig,
    pub variant: VariantKind,
    pub cutoffs: Vec<usize>,
    pub kld_reference: KldReference,
    pub out_dir: PathBuf,
    seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: "tiny".into(),
            min_overlap: 1,
            min_single: 1,
            hide_prob: drip_core::data::DEFAULT_HIDE_PROB,
            val_fraction: drip_core::data::DEFAULT_VAL_FRACTION,
            encoder: BprConfig::default(),
            train: TrainConfig::default(),
            variant: VariantKind::Drip,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            kld_reference: KldReference::HeldOut,
            out_dir: PathBuf::from("runs"),
            seed: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{value}`")))
}

fn kld_name(r: KldReference) -> &'static str {
    match r {
        KldReference::HeldOut => "held_out",
        KldReference::FullHistory => "full_history",
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.merge_toml(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn merge_toml(&mut self, text: &str) -> Result<(), CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        for (key, value) in &table {
            let raw = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Array(items) => items
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            self.set(key, &raw)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "synthetic" => {
                if !matches!(value, "tiny" | "benchmark") {
                    return Err(CliError::Usage(format!("synthetic must be `tiny` or `benchmark`, got `{value}`")));
                }
                self.synthetic = value.into();
            }
            "min_overlap" => self.min_overlap = parse(key, value)?,
            "min_single" => self.min_single = parse(key, value)?,
            "hide_prob" => self.hide_prob = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "encoder_dim" => self.encoder.dim = parse(key, value)?,
            "encoder_epochs" => self.encoder.epochs = parse(key, value)?,
            "encoder_lr" => self.encoder.lr = parse(key, value)?,
            "encoder_l2" => self.encoder.l2 = parse(key, value)?,
            "encoder_negatives" => self.encoder.negatives_per_positive = parse(key, value)?,
            "encoder_batch_size" => self.encoder.batch_size = parse(key, value)?,
            "rho" => self.train.rho = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "weight_decay" => self.train.weight_decay = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "layers" => self.train.layers = parse(key, value)?,
            "heads" => self.train.heads = parse(key, value)?,
            "width" => self.train.width = parse(key, value)?,
            "dropout" => self.train.dropout = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "schedule_floor" => self.train.schedule_floor = parse(key, value)?,
            "schedule_slope" => self.train.schedule_slope = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "variant" => self.variant = value.parse().map_err(CliError::Usage)?,
            "cutoffs" => {
                self.cutoffs = value
                    .split(',')
                    .map(|c| parse(key, c))
                    .collect::<Result<_, _>>()?;
            }
            "kld_reference" => {
                self.kld_reference = match value {
                    "held_out" => KldReference::HeldOut,
                    "full_history" => KldReference::FullHistory,
                    _ => {
                        return Err(CliError::Usage(format!(
                            "kld_reference must be `held_out` or `full_history`, got `{value}`"
                        )))
                    }
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` and applies it.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got `{assignment}`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("missing config key `seed`".into()))
    }

    /// Propagates the experiment seed into every component.
    pub fn seeded(&self) -> Result<Self, CliError> {
        let seed = self.seed()?;
        let mut cfg = self.clone();
        cfg.train.seed = seed;
        cfg.encoder.seed = seed;
        Ok(cfg)
    }

    pub fn single_domain(&self) -> SingleDomainConfig {
        SingleDomainConfig {
            dim: self.encoder.dim,
            epochs: self.train.epochs,
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            batch_size: self.train.batch_size,
            seed: self.train.seed,
            patience: self.train.patience,
        }
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "data" => self.data.as_ref().map_or(String::new(), |p| p.display().to_string()),
            "synthetic" => self.synthetic.clone(),
            "min_overlap" => self.min_overlap.to_string(),
            "min_single" => self.min_single.to_string(),
            "hide_prob" => format!("{:?}", self.hide_prob),
            "val_fraction" => format!("{:?}", self.val_fraction),
            "encoder_dim" => self.encoder.dim.to_string(),
            "encoder_epochs" => self.encoder.epochs.to_string(),
            "encoder_lr" => format!("{:?}", self.encoder.lr),
            "encoder_l2" => format!("{:?}", self.encoder.l2),
            "encoder_negatives" => self.encoder.negatives_per_positive.to_string(),
            "encoder_batch_size" => self.encoder.batch_size.to_string(),
            "rho" => format!("{:?}", self.train.rho),
            "lr" => format!("{:?}", self.train.lr),
            "weight_decay" => format!("{:?}", self.train.weight_decay),
            "batch_size" => self.train.batch_size.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "layers" => self.train.layers.to_string(),
            "heads" => self.train.heads.to_string(),
            "width" => self.train.width.to_string(),
            "dropout" => format!("{:?}", self.train.dropout),
            "seed" => self.seed.map_or(String::new(), |s| s.to_string()),
            "schedule_floor" => format!("{:?}", self.train.schedule_floor),
            "schedule_slope" => format!("{:?}", self.train.schedule_slope),
            "patience" => self.train.patience.to_string(),
            "variant" => self.variant.name().to_string(),
            "cutoffs" => self.cutoffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            "kld_reference" => kld_name(self.kld_reference).to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Sorted `key = value` lines for every key that affects results.
    pub fn canonical(&self) -> String {
        let mut keys: Vec<&str> = KEYS.iter().copied().filter(|k| *k != "out_dir").collect();
        keys.sort_unstable();
        let mut s = String::new();
        for k in keys {
            let _ = writeln!(s, "{k} = {}", self.value_of(k));
        }
        s
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Output directory after applying the environment override.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out_dir.clone(),
        }
    }
}
