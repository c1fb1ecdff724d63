//! Run configuration, assembled from four layers in decreasing priority:
//! command-line flags, a TOML config file, `FAIRSMOOTH_*` environment
//! variables, built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use fairsmooth_core::data::{stratified_split, synthetic, TEST_FRACTION};
use fairsmooth_core::experiment::{ModelSpec, DEFAULT_EVAL_SAMPLES};
use fairsmooth_core::{Activation, Attribute, DatasetKind, GroupedDataset, TrainingConfig, Variant};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Rows per group of the built-in synthetic task.
pub const SYNTHETIC_ROWS_PER_GROUP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Adult,
    Compas,
    Synthetic,
}

impl FromStr for DatasetName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adult" => Ok(Self::Adult),
            "compas" => Ok(Self::Compas),
            "synthetic" => Ok(Self::Synthetic),
            _ => bail!("unknown dataset `{s}` (expected adult, compas or synthetic)"),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adult => "adult",
            Self::Compas => "compas",
            Self::Synthetic => "synthetic",
        })
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dataset: DatasetName,
    pub attribute: Attribute,
    pub training: TrainingConfig,
    pub model: ModelSpec,
    pub n_eval_samples: usize,
    pub split_seed: u64,
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
}

impl RunConfig {
    /// Settings that determine the trained parameters up to the epoch
    /// count. A checkpoint can be resumed, or extended to more epochs, only
    /// if these agree.
    pub fn same_training(&self, other: &Self) -> bool {
        let ignore_epochs = TrainingConfig {
            epochs: other.training.epochs,
            ..self.training.clone()
        };
        self.dataset == other.dataset
            && self.attribute == other.attribute
            && ignore_epochs == other.training
            && self.model == other.model
            && self.split_seed == other.split_seed
    }

    pub fn load_dataset(&self) -> Result<GroupedDataset> {
        let ds = match self.dataset {
            DatasetName::Synthetic => return Ok(synthetic::two_group(SYNTHETIC_ROWS_PER_GROUP, self.split_seed)?),
            DatasetName::Adult => DatasetKind::Adult.load(&self.data_dir, self.attribute),
            DatasetName::Compas => DatasetKind::Compas.load(&self.data_dir, self.attribute),
        }
        .with_context(|| format!("loading {} from {}", self.dataset, self.data_dir.display()))?;
        Ok(stratified_split(ds, TEST_FRACTION, self.split_seed)?)
    }
}

/// One configuration layer; unset keys fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    /// Dataset: adult, compas or synthetic
    #[arg(long)]
    pub dataset: Option<DatasetName>,
    /// Protected attribute: sex or race
    #[arg(long)]
    pub attribute: Option<Attribute>,
    /// Standard deviation of the parameter noise
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Weight of the parameter disparity term
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Monte-Carlo samples per training gradient
    #[arg(long)]
    pub mc_train: Option<usize>,
    /// Monte-Carlo samples for evaluation and certification
    #[arg(long)]
    pub mc_eval: Option<usize>,
    /// Master seed for initialization, training noise and evaluation noise
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the train/test split
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// full, smoothing-only or disparity-only
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Hidden activation: relu, tanh or sigmoid
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Epochs between checkpoints
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory with the raw data files
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr, $($f:ident),+) => {
        Layer { $($f: $hi.$f.or($lo.$f)),+ }
    };
}

impl Layer {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Reads `FAIRSMOOTH_<KEY>` for every key, e.g. `FAIRSMOOTH_SIGMA`.
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        fn get<T: FromStr>(lookup: &impl Fn(&str) -> Option<String>, key: &str) -> Result<Option<T>>
        where
            T::Err: fmt::Display,
        {
            let var = format!("FAIRSMOOTH_{}", key.to_ascii_uppercase());
            match lookup(&var) {
                None => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("{var}: {e}")),
            }
        }
        let hidden = match lookup("FAIRSMOOTH_HIDDEN") {
            None => None,
            Some(v) => Some(
                v.split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .context("FAIRSMOOTH_HIDDEN")?,
            ),
        };
        Ok(Self {
            dataset: get(&lookup, "dataset")?,
            attribute: get(&lookup, "attribute")?,
            sigma: get(&lookup, "sigma")?,
            alpha: get(&lookup, "alpha")?,
            epochs: get(&lookup, "epochs")?,
            batch_size: get(&lookup, "batch_size")?,
            lr: get(&lookup, "lr")?,
            mc_train: get(&lookup, "mc_train")?,
            mc_eval: get(&lookup, "mc_eval")?,
            seed: get(&lookup, "seed")?,
            split_seed: get(&lookup, "split_seed")?,
            variant: get(&lookup, "variant")?,
            hidden,
            activation: get(&lookup, "activation")?,
            checkpoint_every: get(&lookup, "checkpoint_every")?,
            out: get(&lookup, "out")?,
            data_dir: get(&lookup, "data_dir")?,
        })
    }

    /// `self` wins wherever it is set.
    pub fn over(self, lower: Layer) -> Layer {
        merge_fields!(
            self, lower, dataset, attribute, sigma, alpha, epochs, batch_size, lr, mc_train, mc_eval, seed, split_seed,
            variant, hidden, activation, checkpoint_every, out, data_dir
        )
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let d = TrainingConfig::default();
        let m = ModelSpec::default();
        let training = TrainingConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            eta: self.lr.unwrap_or(d.eta),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            sigma: self.sigma.unwrap_or(d.sigma),
            n_train_samples: self.mc_train.unwrap_or(d.n_train_samples),
            master_seed: self.seed.unwrap_or(d.master_seed),
            variant: self.variant.unwrap_or(d.variant),
        };
        training.validate()?;
        let cfg = RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            dataset: self.dataset.unwrap_or(DatasetName::Adult),
            attribute: self.attribute.unwrap_or(Attribute::Sex),
            training,
            model: ModelSpec {
                hidden: self.hidden.unwrap_or(m.hidden),
                activation: self.activation.unwrap_or(m.activation),
            },
            n_eval_samples: self.mc_eval.unwrap_or(DEFAULT_EVAL_SAMPLES),
            split_seed: self.split_seed.unwrap_or(0),
            checkpoint_every: self.checkpoint_every.unwrap_or(10),
            output_dir: self.out.unwrap_or_else(|| PathBuf::from("runs/default")),
            data_dir: self.data_dir.unwrap_or_else(|| PathBuf::from("data")),
        };
        if cfg.n_eval_samples == 0 {
            bail!("mc_eval must be at least 1");
        }
        if cfg.checkpoint_every == 0 {
            bail!("checkpoint_every must be at least 1");
        }
        if cfg.model.hidden.contains(&0) {
            bail!("hidden layer widths must be positive");
        }
        Ok(cfg)
    }
}

/// Applies flags over an optional file over the process environment.
pub fn assemble(flags: Layer, file: Option<&Path>) -> Result<RunConfig> {
    let file = match file {
        Some(p) => Layer::from_toml_file(p)?,
        None => Layer::default(),
    };
    let env = Layer::from_env(|k| std::env::var(k).ok())?;
    flags.over(file).over(env).resolve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn flags_beat_file_beat_env_beat_defaults() {
        let flags = Layer {
            sigma: Some(0.7),
            ..Layer::default()
        };
        let file: Layer = toml::from_str("sigma = 0.6\nalpha = 0.9\n").unwrap();
        let env = Layer::from_env(env(&[
            ("FAIRSMOOTH_SIGMA", "0.5"),
            ("FAIRSMOOTH_ALPHA", "0.4"),
            ("FAIRSMOOTH_EPOCHS", "7"),
        ]))
        .unwrap();
        let cfg = flags.over(file).over(env).resolve().unwrap();
        assert_eq!(cfg.training.sigma, 0.7);
        assert_eq!(cfg.training.alpha, 0.9);
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.batch_size, 128);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        assert!(toml::from_str::<Layer>("sigmaa = 0.6\n").is_err());
    }

    #[test]
    fn env_values_must_parse() {
        assert!(Layer::from_env(env(&[("FAIRSMOOTH_EPOCHS", "many")])).is_err());
        let l = Layer::from_env(env(&[("FAIRSMOOTH_HIDDEN", "8,4"), ("FAIRSMOOTH_DATA_DIR", "/x")])).unwrap();
        assert_eq!(l.hidden, Some(vec![8, 4]));
        assert_eq!(l.data_dir, Some(PathBuf::from("/x")));
    }

    #[test]
    fn invalid_values_fail_resolution() {
        let l = Layer {
            sigma: Some(-1.0),
            ..Layer::default()
        };
        assert!(l.resolve().is_err());
    }
}
