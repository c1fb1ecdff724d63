//! Self-checks of the smoothing and certification machinery on built-in
//! synthetic models, with a structured pass/fail report.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::synthetic;
use crate::error::Result;
use crate::experiment::{train_model, ModelSpec};
use crate::features::Features;
use crate::model::toy::{ClampedAffine, SigmoidLinear};
use crate::model::{Activation, Architecture, Mlp};
use crate::params::ParameterVector;
use crate::rng::{CounterRng, Stream};
use crate::smoothing::{
    check_frechet_derivative, check_lipschitz, check_sigma_convergence, mc_coverage, mc_error_bound, normal_cdf,
    smoothed_directional_derivative, Integrator, SmoothedClassifier,
};
use crate::train::{certify, check_certificate_empirically, init_params, TrainingConfig};

pub const VERIFY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            _ => Err(crate::error::Error::invalid("level", format!("expected fast or full, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub parameters: Value,
    pub measured: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Workload sizes for one level.
#[derive(Debug, Clone, Copy)]
struct Budget {
    coverage_replications: usize,
    lipschitz_pairs: usize,
    lipschitz_samples: usize,
    convergence_samples: usize,
    averaging_sets: usize,
    stress_candidates: usize,
}

impl Level {
    fn budget(self) -> Budget {
        match self {
            Level::Fast => Budget {
                coverage_replications: 200,
                lipschitz_pairs: 10,
                lipschitz_samples: 2_000,
                convergence_samples: 4_000,
                averaging_sets: 1_000,
                stress_candidates: 200,
            },
            Level::Full => Budget {
                coverage_replications: 200,
                lipschitz_pairs: 100,
                lipschitz_samples: 10_000,
                convergence_samples: 20_000,
                averaging_sets: 10_000,
                stress_candidates: 2_000,
            },
        }
    }
}

/// Runs every check at `level`. Identical `(level, seed)` give identical
/// reports.
pub fn run(level: Level, seed: u64) -> Result<VerifyReport> {
    let b = level.budget();
    let checks = vec![
        check_mc_bound_formula()?,
        check_mc_coverage(seed, b.coverage_replications, 100_000)?,
        check_lipschitz_default_arch(seed, 0.5, b.lipschitz_pairs, 10, b.lipschitz_samples)?,
        check_lipschitz_default_arch(seed, 1.0, b.lipschitz_pairs, 10, b.lipschitz_samples)?,
        check_threshold_lipschitz_closed_form(seed, 1_000)?,
        check_convergence(seed, 100, b.convergence_samples)?,
        check_threshold_convergence_closed_form(),
        check_frechet_quadrature()?,
        check_affine_directional_derivative(seed)?,
        check_averaging_bound(seed, b.averaging_sets)?,
        check_trained_certificate(seed, b.stress_candidates)?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        schema_version: VERIFY_SCHEMA_VERSION,
        level,
        seed,
        checks,
        passed,
    })
}

fn verify_rng(seed: u64, check: u64) -> CounterRng {
    CounterRng::new(seed, Stream::Verify, &[check])
}

pub fn check_mc_bound_formula() -> Result<CheckResult> {
    let (hw, conf) = mc_error_bound(100_000, 3.0, 1.0)?;
    Ok(CheckResult {
        name: "mc_error_bound".into(),
        parameters: json!({"samples": 100_000, "a": 3.0, "variance_bound": 1.0}),
        measured: json!({"half_width": hw, "confidence": conf}),
        bound: Some(0.01),
        tolerance: None,
        passed: hw < 0.01 && (conf - 0.9973).abs() < 1e-4,
    })
}

/// Fraction of replications within 0.01 of `Φ(W·x/(σ‖x‖))`, and within
/// three standard errors.
pub fn check_mc_coverage(seed: u64, replications: usize, samples: usize) -> Result<CheckResult> {
    let w = ParameterVector::new(vec![0.3, -0.2])?;
    let x = [1.0, 1.0];
    let r = mc_coverage(&w, &x, 0.5, samples, replications, &verify_rng(seed, 1), 3.0, 0.01)?;
    Ok(CheckResult {
        name: "mc_coverage".into(),
        parameters: json!({"sigma": 0.5, "samples": samples, "replications": replications, "a": 3.0}),
        measured: json!({
            "truth": r.truth,
            "within_0.01": r.abs_tolerance_rate(),
            "within_3se": r.coverage(),
            "max_abs_error": r.max_abs_error,
        }),
        bound: Some(0.99),
        tolerance: Some(0.01),
        passed: r.abs_tolerance_rate() >= 0.99,
    })
}

fn random_binary(rng: &mut impl Rng, rows: usize, cols: usize) -> Features {
    let data = (0..rows * cols).map(|_| f64::from(rng.random_range(0u8..2))).collect();
    Features::new(cols, data).expect("shape is consistent")
}

/// Paired Lipschitz check on the default 18-input network: `pairs` random
/// parameter pairs, `xs_per_pair` random binary inputs each.
pub fn check_lipschitz_default_arch(seed: u64, sigma: f64, pairs: usize, xs_per_pair: usize, samples: usize) -> Result<CheckResult> {
    let arch = Architecture::default_for(18);
    let mlp = Mlp::new(arch.clone());
    let base = verify_rng(seed, 2);
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    let mut max_tol = 0.0f64;
    for p in 0..pairs {
        let mut rng = base.child(p as u64).at(0);
        let w1 = init_params(&arch, seed.wrapping_add(p as u64));
        let radius = sigma * rng.random_range(0.01..0.5);
        let mut dir: Vec<f64> = (0..w1.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v *= radius / norm);
        let w2 = ParameterVector::new(w1.iter().zip(&dir).map(|(a, b)| a + b).collect())?;
        let xs = random_binary(&mut rng, xs_per_pair, 18);
        let a = SmoothedClassifier::new(&mlp, w1, sigma, samples, base.child(1_000_000 + p as u64))?;
        let b = a.with_params(w2)?;
        let r = check_lipschitz(&a, &b, &xs)?;
        violations += r.violations.len();
        max_ratio = max_ratio.max(r.max_difference / r.bound);
        max_tol = max_tol.max(r.max_tolerance);
    }
    Ok(CheckResult {
        name: format!("lipschitz_default_arch_sigma_{sigma}"),
        parameters: json!({"sigma": sigma, "triples": pairs * xs_per_pair, "samples": samples, "params": arch.num_params()}),
        measured: json!({"violations": violations, "max_difference_over_bound": max_ratio}),
        bound: None,
        tolerance: Some(max_tol),
        passed: violations == 0,
    })
}

/// `|Φ(u₁) − Φ(u₂)| ≤ ‖W₁ − W₂‖/(√(2π)σ)` for the threshold-linear base,
/// evaluated in closed form.
pub fn check_threshold_lipschitz_closed_form(seed: u64, triples: usize) -> Result<CheckResult> {
    let mut rng = verify_rng(seed, 3).at(0);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..triples {
        let sigma = rng.random_range(0.05..2.0);
        let w1: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let w2: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u = |w: &[f64; 3]| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / (sigma * xn);
        let diff = (normal_cdf(u(&w1)) - normal_cdf(u(&w2))).abs();
        let dist = w1.iter().zip(&w2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let bound = crate::smoothing::lipschitz_bound(dist, sigma);
        worst = worst.max(diff / bound);
        if diff > bound + 1e-15 {
            violations += 1;
        }
    }
    Ok(CheckResult {
        name: "lipschitz_threshold_closed_form".into(),
        parameters: json!({"triples": triples}),
        measured: json!({"violations": violations, "max_difference_over_bound": worst}),
        bound: Some(1.0),
        tolerance: None,
        passed: violations == 0,
    })
}

pub const CONVERGENCE_SIGMAS: [f64; 4] = [1.0, 0.3, 0.1, 0.03];

/// Mean gap to the base classifier over `inputs` random binary inputs on a
/// randomly initialized default network.
pub fn check_convergence(seed: u64, inputs: usize, samples: usize) -> Result<CheckResult> {
    let arch = Architecture::default_for(18);
    let mlp = Mlp::new(arch.clone());
    let w = init_params(&arch, seed);
    let mut rng = verify_rng(seed, 4).at(0);
    let xs = random_binary(&mut rng, inputs, 18);
    let threshold = 0.01;
    let r = check_sigma_convergence(&mlp, &w, &xs, &CONVERGENCE_SIGMAS, samples, &verify_rng(seed, 5), threshold)?;
    Ok(CheckResult {
        name: "sigma_convergence".into(),
        parameters: json!({"sigmas": CONVERGENCE_SIGMAS, "inputs": inputs, "samples": samples}),
        measured: json!({
            "mean_gaps": r.rows.iter().map(|x| x.mean_gap).collect::<Vec<_>>(),
            "standard_errors": r.rows.iter().map(|x| x.standard_error).collect::<Vec<_>>(),
            "monotone": r.monotone,
        }),
        bound: Some(threshold),
        tolerance: None,
        passed: r.passed(),
    })
}

/// Gap `1 − Φ(W·x/(σ‖x‖))` at `σ = 0.1`, `W·x = 1`, `‖x‖ = 1`.
pub fn check_threshold_convergence_closed_form() -> CheckResult {
    let gap = normal_cdf(-10.0);
    CheckResult {
        name: "sigma_convergence_threshold_closed_form".into(),
        parameters: json!({"sigma": 0.1, "margin": 1.0}),
        measured: json!({"gap": gap}),
        bound: Some(1e-15),
        tolerance: None,
        passed: gap <= 1e-15,
    }
}

pub const FRECHET_HALVINGS: usize = 3;

/// Quadratic shrinkage of the linearization residual on a 2-parameter
/// sigmoid base, integrated by Gauss–Hermite quadrature.
pub fn check_frechet_quadrature() -> Result<CheckResult> {
    let model = SigmoidLinear { dim: 2 };
    let w = ParameterVector::new(vec![0.4, -0.3])?;
    let xs = Features::new(2, vec![1.0, -0.5, 0.3, 1.4, -1.2, 0.7])?;
    let delta = [0.08, 0.06];
    let r = check_frechet_derivative(&model, &w, 0.5, &delta, FRECHET_HALVINGS, &xs, &Integrator::Quadrature { nodes: 40 })?;
    Ok(CheckResult {
        name: "frechet_quadrature".into(),
        parameters: json!({"sigma": 0.5, "delta_norms": r.levels.iter().map(|l| l.delta_norm).collect::<Vec<_>>()}),
        measured: json!({
            "residuals": r.levels.iter().map(|l| l.residual).collect::<Vec<_>>(),
            "ratios": r.ratios,
        }),
        bound: None,
        tolerance: None,
        passed: r.passed,
    })
}

/// On an affine base the smoothed directional derivative equals the plain
/// one.
pub fn check_affine_directional_derivative(seed: u64) -> Result<CheckResult> {
    let model = ClampedAffine {
        dim: 3,
        offset: 0.5,
        slope: 0.01,
    };
    let w = ParameterVector::new(vec![0.2, -0.4, 0.1])?;
    let x = [1.0, 0.5, -1.0];
    let delta = [0.3, 0.1, -0.2];
    let expected = model.directional_derivative(&x, &delta);
    let integ = Integrator::MonteCarlo {
        samples: 50_000,
        noise: verify_rng(seed, 6),
    };
    let v = smoothed_directional_derivative(&model, &w, 0.5, &delta, &Features::new(3, x.to_vec())?, &integ)?[0];
    let tol = v.error.half_width(3.0);
    Ok(CheckResult {
        name: "frechet_affine_directional_derivative".into(),
        parameters: json!({"sigma": 0.5, "samples": 50_000}),
        measured: json!({"estimate": v.value, "expected": expected}),
        bound: None,
        tolerance: Some(tol),
        passed: (v.value - expected).abs() <= tol,
    })
}

/// Relative slack for comparisons that hold with equality in exact
/// arithmetic.
const ROUNDING: f64 = 1e-12;

/// `‖W* − W_k‖ ≤ (K−1)/K·d` over random parameter sets.
pub fn check_averaging_bound(seed: u64, sets: usize) -> Result<CheckResult> {
    let mut rng = verify_rng(seed, 7).at(0);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for s in 0..sets {
        let k = [2usize, 3, 5][s % 3];
        let m = rng.random_range(1..40);
        let ws: Vec<ParameterVector> = (0..k)
            .map(|_| ParameterVector::new((0..m).map(|_| rng.random_range(-10.0..10.0)).collect()))
            .collect::<Result<_>>()?;
        let c = certify(&ws, 1.0)?;
        let bound = (k as f64 - 1.0) / k as f64 * c.max_distance;
        for d in &c.per_group_distances {
            if *d > bound * (1.0 + ROUNDING) {
                violations += 1;
            }
            if bound > 0.0 {
                worst = worst.max(d / bound);
            }
        }
    }
    Ok(CheckResult {
        name: "averaging_bound".into(),
        parameters: json!({"sets": sets, "groups": [2, 3, 5]}),
        measured: json!({"violations": violations, "max_ratio": worst}),
        bound: Some(1.0),
        tolerance: None,
        passed: violations == 0,
    })
}

/// Trains a small coupled model on the synthetic two-group task and checks
/// the certificate on its data and on random inputs.
pub fn check_trained_certificate(seed: u64, candidates: usize) -> Result<CheckResult> {
    let ds = synthetic::two_group(200, seed)?;
    let spec = ModelSpec {
        hidden: vec![8],
        activation: Activation::Tanh,
    };
    let cfg = TrainingConfig {
        alpha: 0.2,
        eta: 0.1,
        epochs: 10,
        batch_size: 32,
        sigma: 0.5,
        n_train_samples: 4,
        master_seed: seed,
        ..TrainingConfig::default()
    };
    let model = train_model(&ds, &spec, &cfg, None, |_, _| Ok(()))?;
    let mlp = Mlp::new(model.arch.clone());
    let noise = verify_rng(seed, 8);
    let samples = 4_000;
    let train = ds.part(crate::data::Split::Train);
    let per_group: Vec<Features> = (0..2).map(|k| train.group_features(k)).collect();
    let on_data = check_certificate_empirically(&mlp, &model.group_params, cfg.sigma, samples, &noise, &per_group)?;
    let mut rng = verify_rng(seed, 9).at(0);
    let random: Vec<Features> = (0..2)
        .map(|_| {
            let data = (0..candidates * 3).map(|_| rng.random_range(-3.0..3.0)).collect();
            Features::new(3, data)
        })
        .collect::<Result<_>>()?;
    let stress = check_certificate_empirically(&mlp, &model.group_params, cfg.sigma, samples, &noise, &random)?;
    Ok(CheckResult {
        name: "certificate_trained_synthetic".into(),
        parameters: json!({"sigma": cfg.sigma, "samples": samples, "random_inputs": candidates}),
        measured: json!({
            "epsilon": on_data.epsilon,
            "max_gap_data": on_data.max_gap(),
            "max_gap_random": stress.max_gap(),
        }),
        bound: Some(on_data.epsilon),
        tolerance: Some(
            on_data
                .groups
                .iter()
                .chain(&stress.groups)
                .map(|g| g.max_tolerance)
                .fold(0.0, f64::max),
        ),
        passed: on_data.passed() && stress.passed(),
    })
}

/// Runs [`run`] and returns the report with its wall time in seconds.
pub fn run_timed(level: Level, seed: u64) -> Result<(VerifyReport, f64)> {
    let t = Instant::now();
    let r = run(level, seed)?;
    Ok((r, t.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        assert!(check_mc_bound_formula().unwrap().passed);
        assert!(check_threshold_convergence_closed_form().passed);
        assert!(check_frechet_quadrature().unwrap().passed);
        assert!(check_averaging_bound(1, 300).unwrap().passed);
        assert!(check_threshold_lipschitz_closed_form(1, 300).unwrap().passed);
        assert!(check_affine_directional_derivative(1).unwrap().passed);
    }

    #[test]
    fn level_names_parse() {
        assert_eq!("fast".parse::<Level>().unwrap(), Level::Fast);
        assert!("slow".parse::<Level>().is_err());
    }
}
