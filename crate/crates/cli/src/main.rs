//! `fairsmooth`: train group-fair smoothed classifiers, certify them and
//! evaluate them.

mod config;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fairsmooth_core::data::write_processed;
use fairsmooth_core::train::{certify, implied_sigma};
use fairsmooth_core::verify::{self, Level};

use config::{assemble, DatasetName, Layer};
use run::{EvaluationFile, Run, PARTITION_REPORT_SCHEMA_VERSION, REPORT_FILE};

#[derive(Parser)]
#[command(name = "fairsmooth", version)]
#[command(about = "Certified group-fair classification by Gaussian parameter smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the preprocessed binary-feature table and its manifest.
    Prepare {
        #[command(flatten)]
        layer: Layer,
        /// TOML config file
        #[arg(long)]
        config: Option<PathBuf>,
    },

    /// Train one classifier per group with the coupled update.
    Train {
        #[command(flatten)]
        layer: Layer,
        /// TOML config file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ignore any checkpoint in the output directory
        #[arg(long)]
        fresh: bool,
        #[arg(long, short)]
        quiet: bool,
    },

    /// Fairness certificate of a set of group models.
    Certify {
        /// Group model files
        #[arg(required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        sigma: f64,
        /// Also print the σ at which the same models certify this ε
        #[arg(long)]
        target_epsilon: Option<f64>,
        /// Write the certificate here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Accuracy, disparities and ε-fairness of a trained run.
    Evaluate {
        /// Run directory written by `train`
        #[arg(long)]
        run: PathBuf,
        /// Test-set fractions, one report each
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        fractions: Vec<f64>,
        /// Overrides the run's evaluation sample count
        #[arg(long)]
        mc_eval: Option<usize>,
        /// Seed of the partition draw
        #[arg(long, default_value_t = 0)]
        partition_seed: u64,
        /// Report path, default <run>/report.json
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Train and evaluate over a grid of σ and α values.
    Sweep {
        #[command(flatten)]
        layer: Layer,
        /// TOML config file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, short)]
        quiet: bool,
    },

    /// Numerical self-checks on built-in models.
    Verify {
        #[arg(long, default_value = "fast")]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Prepare { layer, config } => {
            let cfg = assemble(layer, config.as_deref())?;
            let raw: Vec<PathBuf> = match cfg.dataset {
                DatasetName::Adult => fairsmooth_core::data::ADULT_FILES.iter().map(|f| cfg.data_dir.join(f)).collect(),
                DatasetName::Compas => vec![cfg.data_dir.join(fairsmooth_core::data::COMPAS_FILE)],
                DatasetName::Synthetic => Vec::new(),
            };
            let ds = cfg.load_dataset()?;
            let raw_refs: Vec<&std::path::Path> = raw.iter().map(PathBuf::as_path).collect();
            let manifest = write_processed(&ds, &cfg.output_dir, &raw_refs)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Train {
            layer,
            config,
            fresh,
            quiet,
        } => {
            let cfg = assemble(layer, config.as_deref())?;
            let model = run::train(&cfg, fresh, !quiet)?;
            let c = model.certificate()?;
            println!(
                "trained {} groups into {}: d = {:.6}, epsilon = {:.6}",
                c.groups,
                cfg.output_dir.display(),
                c.max_distance,
                c.epsilon
            );
        }
        Command::Certify {
            models,
            sigma,
            target_epsilon,
            out,
        } => {
            let (_, params) = run::load_compatible(&models)?;
            let cert = certify(&params, sigma)?;
            match out {
                Some(path) => run::write_json(&path, &cert)?,
                None => println!("{}", serde_json::to_string_pretty(&cert)?),
            }
            if let Some(eps) = target_epsilon {
                let s = implied_sigma(cert.groups, cert.max_distance, eps)?;
                eprintln!("implied sigma for epsilon {eps}: {s}");
            }
        }
        Command::Evaluate {
            run,
            fractions,
            mc_eval,
            partition_seed,
            out,
        } => {
            let r = Run::open(&run)?;
            let ds = r.config.load_dataset()?;
            let samples = mc_eval.unwrap_or(r.config.n_eval_samples);
            if samples == 0 {
                bail!("mc_eval must be at least 1");
            }
            let seed = r.config.training.master_seed;
            let partitions = run::evaluate_partitions(&r.model, &ds, &fractions, samples, seed, partition_seed)?;
            for p in &partitions {
                println!(
                    "fraction {:.2}: rows {} accuracy {:.4} dDP {:.4} dEO {:.4}",
                    p.fraction, p.report.rows, p.report.accuracy, p.report.delta_dp, p.report.delta_eo
                );
            }
            let file = EvaluationFile {
                schema_version: PARTITION_REPORT_SCHEMA_VERSION,
                dataset: format!("{}/{}", r.config.dataset, r.config.attribute),
                variant: r.config.training.variant.to_string(),
                sigma: r.config.training.sigma,
                n_eval_samples: samples,
                eval_seed: seed,
                partition_seed,
                certificate: r.model.certificate()?,
                partitions,
            };
            let path = out.unwrap_or_else(|| run.join(REPORT_FILE));
            run::write_json(&path, &file).with_context(|| format!("writing {}", path.display()))?;
        }
        Command::Sweep {
            layer,
            config,
            sigmas,
            alphas,
            seeds,
            quiet,
        } => {
            let cfg = assemble(layer, config.as_deref())?;
            let grid = sweep::Grid {
                sigmas: sigmas.unwrap_or_else(|| vec![cfg.training.sigma]),
                alphas: alphas.unwrap_or_else(|| vec![cfg.training.alpha]),
                seeds,
            };
            let path = sweep::run(&cfg, &grid, !quiet)?;
            println!("wrote {}", path.display());
        }
        Command::Verify { level, seed, out } => {
            let (report, seconds) = verify::run_timed(level, seed)?;
            for c in &report.checks {
                println!("{:<4} {}  {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.measured);
            }
            println!("{} in {seconds:.1}s", if report.passed { "passed" } else { "failed" });
            if let Some(path) = out {
                run::write_json(&path, &report)?;
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
