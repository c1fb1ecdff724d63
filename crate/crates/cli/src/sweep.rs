//! Grid sweeps over σ and α.

use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::run;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SCHEMA_VERSION: u32 = 1;

pub struct Grid {
    pub sigmas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub sigma: f64,
    pub alpha: f64,
    /// Seed number, or `median` for the aggregate row of a grid point.
    pub seed: String,
    pub accuracy: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
    pub epsilon: f64,
    pub max_distance: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn median_row(rows: &[SweepRow]) -> SweepRow {
    let col = |f: fn(&SweepRow) -> f64| median(rows.iter().map(f).collect());
    SweepRow {
        schema_version: SWEEP_SCHEMA_VERSION,
        sigma: rows[0].sigma,
        alpha: rows[0].alpha,
        seed: "median".into(),
        accuracy: col(|r| r.accuracy),
        delta_dp: col(|r| r.delta_dp),
        delta_eo: col(|r| r.delta_eo),
        epsilon: col(|r| r.epsilon),
        max_distance: col(|r| r.max_distance),
    }
}

/// Trains every (σ, α, seed) combination into its own run directory under
/// `base.output_dir` and writes `sweep.csv` there.
pub fn run(base: &RunConfig, grid: &Grid, progress: bool) -> Result<PathBuf> {
    if grid.sigmas.is_empty() || grid.alphas.is_empty() || grid.seeds.is_empty() {
        bail!("sweep grid is empty");
    }
    std::fs::create_dir_all(&base.output_dir)?;
    let path = base.output_dir.join(SWEEP_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for &sigma in &grid.sigmas {
        for &alpha in &grid.alphas {
            let mut rows = Vec::with_capacity(grid.seeds.len());
            for &seed in &grid.seeds {
                let mut cfg = base.clone();
                cfg.training.sigma = sigma;
                cfg.training.alpha = alpha;
                cfg.training.master_seed = seed;
                cfg.training.validate()?;
                cfg.output_dir = base.output_dir.join(format!("sigma-{sigma}-alpha-{alpha}-seed-{seed}"));
                if progress {
                    eprintln!("sigma {sigma} alpha {alpha} seed {seed}");
                }
                let model = run::train(&cfg, false, false)?;
                let ds = cfg.load_dataset()?;
                let report = run::evaluate_partitions(&model, &ds, &[1.0], cfg.n_eval_samples, seed, 0)?
                    .remove(0)
                    .report;
                let cert = model.certificate()?;
                let row = SweepRow {
                    schema_version: SWEEP_SCHEMA_VERSION,
                    sigma,
                    alpha,
                    seed: seed.to_string(),
                    accuracy: report.accuracy,
                    delta_dp: report.delta_dp,
                    delta_eo: report.delta_eo,
                    epsilon: cert.epsilon,
                    max_distance: cert.max_distance,
                };
                w.serialize(&row)?;
                w.flush()?;
                rows.push(row);
            }
            w.serialize(median_row(&rows))?;
            w.flush()?;
        }
    }
    Ok(path)
}
