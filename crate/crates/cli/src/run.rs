//! Run directories: training with checkpoints, model files, evaluation.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fairsmooth_core::data::{partition_test, Split};
use fairsmooth_core::experiment::{evaluate, train_model, TrainedModel};
use fairsmooth_core::metrics::EvaluationReport;
use fairsmooth_core::model::{read_model, write_model, SavedModel};
use fairsmooth_core::train::{EpochRecord, TrainState};
use fairsmooth_core::{Architecture, FairnessCertificate, GroupedDataset, ParameterVector};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train.log.jsonl";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const REPORT_FILE: &str = "report.json";
pub const MODELS_DIR: &str = "models";
pub const AVERAGED_MODEL: &str = "averaged.model";

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const LOG_SCHEMA_VERSION: u32 = 1;
pub const PARTITION_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    config: RunConfig,
    state: TrainState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LogLine {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: EpochRecord,
}

pub fn group_model_file(k: usize) -> String {
    format!("group-{k}.model")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn read_checkpoint(dir: &Path) -> Result<Option<Checkpoint>> {
    let path = dir.join(CHECKPOINT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let ck: Checkpoint = read_json(&path)?;
    if ck.schema_version != CHECKPOINT_SCHEMA_VERSION {
        bail!("{}: unsupported schema version {}", path.display(), ck.schema_version);
    }
    Ok(Some(ck))
}

/// Keeps the log lines of epochs `1..=epoch` and drops anything later.
fn truncate_log(path: &Path, epoch: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut kept = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).with_context(|| format!("parsing {}", path.display()))?;
        if parsed.record.epoch <= epoch {
            kept.push(line);
        }
    }
    let mut out = String::new();
    for l in kept {
        out.push_str(&l);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Trains into `cfg.output_dir`, resuming from its checkpoint when one
/// exists for the same settings. `fresh` discards any previous state.
pub fn train(cfg: &RunConfig, fresh: bool, progress: bool) -> Result<TrainedModel> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let log_path = dir.join(LOG_FILE);
    let resume = if fresh {
        None
    } else {
        match read_checkpoint(dir)? {
            Some(ck) if ck.config.same_training(cfg) => {
                if ck.state.epoch > cfg.training.epochs {
                    bail!(
                        "{} is checkpointed after epoch {}, past the requested {} epochs; pass --fresh to restart",
                        dir.display(),
                        ck.state.epoch,
                        cfg.training.epochs
                    );
                }
                Some(ck.state)
            }
            Some(_) => bail!(
                "{} holds a checkpoint for different settings; pass --fresh to overwrite it",
                dir.display()
            ),
            None => None,
        }
    };
    match &resume {
        Some(state) => {
            truncate_log(&log_path, state.epoch)?;
            if progress {
                eprintln!("resuming after epoch {}", state.epoch);
            }
        }
        None => {
            let _ = fs::remove_file(dir.join(CHECKPOINT_FILE));
            File::create(&log_path)?;
        }
    }
    write_json(&dir.join(CONFIG_FILE), cfg)?;

    let ds = cfg.load_dataset()?;
    let mut log = fs::OpenOptions::new().append(true).open(&log_path)?;
    let epochs = cfg.training.epochs;
    let model = train_model(&ds, &cfg.model, &cfg.training, resume, |rec, state| {
        let line = serde_json::to_string(&LogLine {
            schema_version: LOG_SCHEMA_VERSION,
            record: rec.clone(),
        })
        .map_err(std::io::Error::other)?;
        writeln!(log, "{line}")?;
        if rec.epoch % cfg.checkpoint_every == 0 || rec.epoch == epochs {
            log.flush()?;
            let ck = Checkpoint {
                schema_version: CHECKPOINT_SCHEMA_VERSION,
                config: cfg.clone(),
                state: state.clone(),
            };
            write_json(&dir.join(CHECKPOINT_FILE), &ck).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        if progress && (rec.epoch % 10 == 0 || rec.epoch == epochs) {
            eprintln!(
                "epoch {:>4}/{epochs}  loss {:?}  d {:.5}  eps {:.5}",
                rec.epoch,
                rec.group_loss.iter().map(|l| (l * 1e4).round() / 1e4).collect::<Vec<_>>(),
                rec.max_distance,
                rec.epsilon
            );
        }
        Ok(())
    })?;
    save_models(dir, &model, &ds)?;
    write_json(&dir.join(CERTIFICATE_FILE), &model.certificate()?)?;
    Ok(model)
}

fn save_models(dir: &Path, model: &TrainedModel, ds: &GroupedDataset) -> Result<()> {
    let mdir = dir.join(MODELS_DIR);
    fs::create_dir_all(&mdir)?;
    let names = &ds.group_names;
    for (k, p) in model.group_params.iter().enumerate() {
        save_model(&mdir.join(group_model_file(k)), &model.arch, p, names.get(k).cloned())?;
    }
    save_model(&mdir.join(AVERAGED_MODEL), &model.arch, &model.averaged, None)
}

pub fn save_model(path: &Path, arch: &Architecture, params: &ParameterVector, group: Option<String>) -> Result<()> {
    let saved = SavedModel {
        arch: arch.clone(),
        params: params.clone(),
        group,
    };
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_model(&mut w, &saved)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_model(BufReader::new(f), &path.display().to_string())?)
}

/// Loads models and checks that they share one architecture.
pub fn load_compatible(paths: &[PathBuf]) -> Result<(Architecture, Vec<ParameterVector>)> {
    let Some(first) = paths.first() else {
        bail!("at least one model file is required");
    };
    let arch = load_model(first)?.arch;
    let mut params = Vec::with_capacity(paths.len());
    for p in paths {
        let m = load_model(p)?;
        if m.arch != arch {
            bail!(
                "architecture mismatch: {} has {:?}, {} has {:?}",
                first.display(),
                arch,
                p.display(),
                m.arch
            );
        }
        params.push(m.params);
    }
    Ok((arch, params))
}

/// A finished run directory.
pub struct Run {
    pub config: RunConfig,
    pub model: TrainedModel,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut config: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
        config.output_dir = dir.to_path_buf();
        let mdir = dir.join(MODELS_DIR);
        let mut paths = Vec::new();
        while mdir.join(group_model_file(paths.len())).exists() {
            paths.push(mdir.join(group_model_file(paths.len())));
        }
        if paths.is_empty() {
            bail!("{} contains no group models; run `fairsmooth train` first", mdir.display());
        }
        let (arch, params) = load_compatible(&paths)?;
        let model = TrainedModel::from_group_params(arch, config.training.variant, config.training.sigma, params)?;
        Ok(Self { config, model })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub fraction: f64,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub schema_version: u32,
    pub dataset: String,
    pub variant: String,
    pub sigma: f64,
    pub n_eval_samples: usize,
    pub eval_seed: u64,
    pub partition_seed: u64,
    pub certificate: FairnessCertificate,
    pub partitions: Vec<PartitionReport>,
}

/// Evaluates `model` on random subsets of the test split. Every row is
/// predicted once, so overlapping partitions agree on shared rows.
pub fn evaluate_partitions(
    model: &TrainedModel,
    ds: &GroupedDataset,
    fractions: &[f64],
    samples: usize,
    eval_seed: u64,
    partition_seed: u64,
) -> Result<Vec<PartitionReport>> {
    let parts = partition_test(ds, fractions, partition_seed)?;
    let test_rows = ds.indices(Split::Test);
    let test = ds.part(Split::Test);
    let preds = model.predict(&test.features, samples, eval_seed)?;
    parts
        .iter()
        .zip(fractions)
        .map(|(rows, &fraction)| {
            let positions: Vec<usize> = rows
                .iter()
                .map(|r| test_rows.binary_search(r).expect("partition rows come from the test split"))
                .collect();
            let subset = ds.subset(rows);
            let report = evaluate(model, &subset, &preds.select(&positions), ds.num_groups())?;
            Ok(PartitionReport { fraction, report })
        })
        .collect()
}
