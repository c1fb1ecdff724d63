//! Numerical checks of the smoothed classifier's analytic properties:
//! the global Lipschitz bound in parameter space, convergence to the base
//! classifier as σ → 0, Fréchet differentiability, and Monte-Carlo
//! interval coverage.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::Features;
use crate::model::toy::ThresholdLinear;
use crate::model::BaseClassifier;
use crate::params::ParameterVector;
use crate::rng::CounterRng;

use super::quadrature::{GaussHermite, MAX_DIM};
use super::{monte_carlo, normal_cdf, perturb, validate_smoothing, Moments, SmoothedClassifier, SmoothedValue};

/// Confidence multiplier for paired Lipschitz and certificate checks.
pub const PAIRED_CHECK_MULTIPLIER: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzViolation {
    pub x_index: usize,
    pub difference: f64,
    pub bound: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub sigma: f64,
    pub param_distance: f64,
    /// `‖W₁ − W₂‖₂ / (√(2π)·σ)`.
    pub bound: f64,
    pub max_difference: f64,
    pub max_tolerance: f64,
    pub checked: usize,
    pub violations: Vec<LipschitzViolation>,
}

impl LipschitzReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `L / (√(2π)σ)`: the parameter-space Lipschitz bound for a distance `L`.
pub fn lipschitz_bound(distance: f64, sigma: f64) -> f64 {
    distance / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

fn check_paired<M: BaseClassifier + ?Sized>(a: &SmoothedClassifier<'_, M>, b: &SmoothedClassifier<'_, M>) -> Result<()> {
    if a.sigma() != b.sigma() {
        return Err(Error::invalid(
            "sigma",
            format!("paired classifiers must share σ ({} vs {})", a.sigma(), b.sigma()),
        ));
    }
    if a.samples() != b.samples() {
        return Err(Error::invalid("samples", "paired classifiers must share the sample count"));
    }
    if a.noise() != b.noise() {
        return Err(Error::invalid("noise", "paired classifiers must share the noise stream"));
    }
    if !std::ptr::eq(
        a.model() as *const M as *const u8,
        b.model() as *const M as *const u8,
    ) {
        return Err(Error::invalid("model", "paired classifiers must share the base model"));
    }
    Ok(())
}

/// Smoothed predictions of two classifiers on the same rows under the same
/// `Δ_j`.
pub(crate) fn paired_predictions<M: BaseClassifier + ?Sized>(
    a: &SmoothedClassifier<'_, M>,
    b: &SmoothedClassifier<'_, M>,
    xs: &Features,
) -> Result<(Vec<SmoothedValue>, Vec<SmoothedValue>)> {
    check_paired(a, b)?;
    check_dim("feature vector", a.model().input_dim(), xs.cols())?;
    let rows = xs.rows();
    if rows == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let model = a.model();
    let (pa, pb) = (a.params().as_slice(), b.params().as_slice());
    let moments = monte_carlo(a.samples(), pa.len(), a.sigma(), a.noise(), 2 * rows, |delta, w, out| {
        let (oa, ob) = out.split_at_mut(rows);
        perturb(pa, delta, w);
        model.predict_rows(w, xs, oa);
        perturb(pb, delta, w);
        model.predict_rows(w, xs, ob);
    });
    let mut values: Vec<SmoothedValue> = moments.into_iter().map(super::to_value).collect();
    let second = values.split_off(rows);
    Ok((values, second))
}

/// Checks `|N̂(W₁)(x) − N̂(W₂)(x)| ≤ ‖W₁ − W₂‖₂/(√(2π)σ)` for every row,
/// allowing `4·√(V̂₁/N + V̂₂/N)` of Monte-Carlo slack.
pub fn check_lipschitz<M: BaseClassifier + ?Sized>(
    first: &SmoothedClassifier<'_, M>,
    second: &SmoothedClassifier<'_, M>,
    xs: &Features,
) -> Result<LipschitzReport> {
    let (va, vb) = paired_predictions(first, second, xs)?;
    let distance = first.params().distance(second.params())?;
    let bound = lipschitz_bound(distance, first.sigma());
    let mut report = LipschitzReport {
        sigma: first.sigma(),
        param_distance: distance,
        bound,
        max_difference: 0.0,
        max_tolerance: 0.0,
        checked: va.len(),
        violations: Vec::new(),
    };
    for (i, (a, b)) in va.iter().zip(&vb).enumerate() {
        let difference = (a.value - b.value).abs();
        let n = a.error.sample_count as f64;
        let tolerance = PAIRED_CHECK_MULTIPLIER * ((a.error.variance + b.error.variance) / n).sqrt();
        report.max_difference = report.max_difference.max(difference);
        report.max_tolerance = report.max_tolerance.max(tolerance);
        if difference > bound + tolerance {
            report.violations.push(LipschitzViolation {
                x_index: i,
                difference,
                bound,
                tolerance,
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub sigma: f64,
    /// Mean over inputs of `|N̂_σ(W)(x) − f(x; W)|`.
    pub mean_gap: f64,
    /// Mean over inputs of the Monte-Carlo standard error.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Gaps never rise by more than two combined standard errors.
    pub monotone: bool,
    pub final_gap: f64,
    pub final_threshold: f64,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.final_gap <= self.final_threshold
    }
}

/// Mean gap between the smoothed and base classifier for each σ in a
/// strictly decreasing sequence. All σ share the same standard normal
/// draws, `Δ_j = σ·τ_j`.
pub fn check_sigma_convergence<M: BaseClassifier + ?Sized>(
    model: &M,
    params: &ParameterVector,
    xs: &Features,
    sigmas: &[f64],
    samples: usize,
    noise: &CounterRng,
    final_threshold: f64,
) -> Result<ConvergenceReport> {
    if sigmas.is_empty() {
        return Err(Error::Empty("sigma sequence"));
    }
    for &s in sigmas {
        validate_smoothing(s, samples)?;
    }
    if sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("sigmas", "must be strictly decreasing"));
    }
    if xs.is_empty() {
        return Err(Error::Empty("inputs"));
    }
    let mut base = vec![0.0; xs.rows()];
    model.predict_rows(params, xs, &mut base);
    let n = xs.rows() as f64;
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let sc = SmoothedClassifier::new(model, params.clone(), sigma, samples, noise.clone())?;
        let values = sc.predict_rows(xs)?;
        let mean_gap = values.iter().zip(&base).map(|(v, b)| (v.value - b).abs()).sum::<f64>() / n;
        let standard_error = values.iter().map(|v| v.error.half_width(1.0)).sum::<f64>() / n;
        rows.push(ConvergenceRow {
            sigma,
            mean_gap,
            standard_error,
        });
    }
    let monotone = rows.windows(2).all(|w| {
        let slack = 2.0 * (w[0].standard_error.powi(2) + w[1].standard_error.powi(2)).sqrt();
        w[1].mean_gap <= w[0].mean_gap + slack
    });
    let final_gap = rows.last().map(|r| r.mean_gap).unwrap_or(0.0);
    Ok(ConvergenceReport {
        rows,
        monotone,
        final_gap,
        final_threshold,
    })
}

/// How Gaussian expectations are computed in the derivative checks.
#[derive(Debug, Clone)]
pub enum Integrator {
    /// Paired Monte-Carlo over the given noise stream.
    MonteCarlo { samples: usize, noise: CounterRng },
    /// Tensor Gauss–Hermite rule; only for a handful of parameters.
    Quadrature { nodes: usize },
}

/// Per-input Gaussian expectations of several integrands sharing `Δ`.
/// `sample(Δ, w, out)` writes `outputs` values per input row.
fn integrate<F>(integrator: &Integrator, dim: usize, sigma: f64, outputs: usize, sample: F) -> Result<Vec<Moments>>
where
    F: Fn(&[f64], &mut Vec<f64>, &mut [f64]) + Sync,
{
    match integrator {
        Integrator::MonteCarlo { samples, noise } => {
            validate_smoothing(sigma, *samples)?;
            Ok(monte_carlo(*samples, dim, sigma, noise, outputs, sample))
        }
        Integrator::Quadrature { nodes } => {
            validate_smoothing(sigma, 1)?;
            if dim == 0 || dim > MAX_DIM {
                return Err(Error::invalid(
                    "dim",
                    format!("tensor quadrature supports 1..={MAX_DIM} parameters, got {dim}"),
                ));
            }
            let rule = GaussHermite::new(*nodes)?;
            let mut acc = vec![0.0; outputs];
            weighted_tensor_sums(&rule, dim, sigma, &sample, &mut acc);
            if acc.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("quadrature integrand"));
            }
            Ok(acc
                .into_iter()
                .map(|mean| Moments {
                    count: rule.nodes().len().pow(dim as u32),
                    mean,
                    variance: 0.0,
                })
                .collect())
        }
    }
}

fn weighted_tensor_sums<F>(rule: &GaussHermite, dim: usize, sigma: f64, sample: &F, acc: &mut [f64])
where
    F: Fn(&[f64], &mut Vec<f64>, &mut [f64]),
{
    let n = rule.nodes().len();
    let mut idx = vec![0usize; dim];
    let mut delta = vec![0.0; dim];
    let mut vals = vec![0.0; acc.len()];
    let mut w = Vec::new();
    loop {
        let mut weight = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            delta[k] = sigma * rule.nodes()[i];
            weight *= rule.weights()[i];
        }
        sample(&delta, &mut w, &mut vals);
        for (a, v) in acc.iter_mut().zip(&vals) {
            *a += weight * v;
        }
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                return;
            }
        }
    }
}

/// Estimates of `P(W)δ(x) = E_Δ[f(x; W + Δ)·(Δ·δ)]/σ²`, the candidate
/// Fréchet derivative of `W ↦ N̂(W)(x)` applied to `δ`.
pub fn smoothed_directional_derivative<M: BaseClassifier + ?Sized>(
    model: &M,
    params: &ParameterVector,
    sigma: f64,
    delta: &[f64],
    xs: &Features,
    integrator: &Integrator,
) -> Result<Vec<SmoothedValue>> {
    check_dim("parameter vector", model.num_params(), params.len())?;
    check_dim("direction", params.len(), delta.len())?;
    check_dim("feature vector", model.input_dim(), xs.cols())?;
    let rows = xs.rows();
    let p = params.as_slice();
    let inv_var = 1.0 / (sigma * sigma);
    let moments = integrate(integrator, p.len(), sigma, rows, |noise, w, out| {
        perturb(p, noise, w);
        model.predict_rows(w, xs, out);
        let score: f64 = noise.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>() * inv_var;
        out.iter_mut().for_each(|v| *v *= score);
    })?;
    Ok(moments.into_iter().map(super::to_value).collect())
}

/// Per-input `N̂(W+δ)(x) − N̂(W)(x) − P(W)δ(x)`, with all three terms
/// integrated against the same `Δ`.
fn residuals<M: BaseClassifier + ?Sized>(
    model: &M,
    params: &ParameterVector,
    sigma: f64,
    delta: &[f64],
    xs: &Features,
    integrator: &Integrator,
) -> Result<Vec<Moments>> {
    check_dim("parameter vector", model.num_params(), params.len())?;
    check_dim("direction", params.len(), delta.len())?;
    check_dim("feature vector", model.input_dim(), xs.cols())?;
    let rows = xs.rows();
    let p = params.as_slice();
    let shifted: Vec<f64> = p.iter().zip(delta).map(|(a, b)| a + b).collect();
    let inv_var = 1.0 / (sigma * sigma);
    integrate(integrator, p.len(), sigma, rows, |noise, w, out| {
        let mut base = vec![0.0; rows];
        perturb(p, noise, w);
        model.predict_rows(w, xs, &mut base);
        perturb(&shifted, noise, w);
        model.predict_rows(w, xs, out);
        let score: f64 = noise.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>() * inv_var;
        for (o, b) in out.iter_mut().zip(&base) {
            *o = (*o - b) - b * score;
        }
    })
}

/// `max_x |N̂(W+δ)(x) − N̂(W)(x) − P(W)δ(x)|` over the rows of `xs`.
pub fn frechet_residual<M: BaseClassifier + ?Sized>(
    model: &M,
    params: &ParameterVector,
    sigma: f64,
    delta: &[f64],
    xs: &Features,
    integrator: &Integrator,
) -> Result<f64> {
    Ok(residuals(model, params, sigma, delta, xs, integrator)?
        .iter()
        .map(|m| m.mean.abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetLevel {
    pub delta_norm: f64,
    pub residual: f64,
    /// Three standard errors of the residual (0 for quadrature).
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrechetReport {
    pub levels: Vec<FrechetLevel>,
    /// `residual[s] / residual[s+1]` for consecutive halvings of `δ`.
    pub ratios: Vec<f64>,
    pub ratio_band: (f64, f64),
    pub passed: bool,
}

/// Checks that the linearization residual shrinks quadratically: each
/// halving of `δ` divides it by a factor in `[3, 5]`.
pub fn check_frechet_derivative<M: BaseClassifier + ?Sized>(
    model: &M,
    params: &ParameterVector,
    sigma: f64,
    delta: &[f64],
    halvings: usize,
    xs: &Features,
    integrator: &Integrator,
) -> Result<FrechetReport> {
    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("delta", "direction must have non-zero norm"));
    }
    if halvings == 0 {
        return Err(Error::invalid("halvings", "need at least one halving"));
    }
    if xs.is_empty() {
        return Err(Error::Empty("inputs"));
    }
    let band = (3.0, 5.0);
    let mut levels = Vec::with_capacity(halvings + 1);
    for s in 0..=halvings {
        let scale = 0.5f64.powi(s as i32);
        let d: Vec<f64> = delta.iter().map(|v| v * scale).collect();
        let res = residuals(model, params, sigma, &d, xs, integrator)?;
        let (residual, tolerance) = res.iter().fold((0.0f64, 0.0f64), |(r, t), m| {
            (r.max(m.mean.abs()), t.max(3.0 * m.standard_error()))
        });
        levels.push(FrechetLevel {
            delta_norm: norm * scale,
            residual,
            tolerance,
        });
    }
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[0].residual / w[1].residual).collect();
    let passed = levels.windows(2).all(|w| {
        // widest and narrowest ratio consistent with the error bars
        let hi_den = (w[1].residual - w[1].tolerance).max(0.0);
        let lo = (w[0].residual - w[0].tolerance).max(0.0) / (w[1].residual + w[1].tolerance);
        let hi = if hi_den > 0.0 {
            (w[0].residual + w[0].tolerance) / hi_den
        } else {
            f64::INFINITY
        };
        lo <= band.1 && hi >= band.0
    });
    Ok(FrechetReport {
        levels,
        ratios,
        ratio_band: band,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub truth: f64,
    pub sigma: f64,
    pub samples: usize,
    pub replications: usize,
    pub a: f64,
    pub abs_tolerance: f64,
    /// Replications whose estimate lies within `a` standard errors of the truth.
    pub covered: usize,
    /// Replications whose estimate lies within `abs_tolerance` of the truth.
    pub within_abs_tolerance: usize,
    pub max_abs_error: f64,
}

impl CoverageReport {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.replications as f64
    }

    pub fn abs_tolerance_rate(&self) -> f64 {
        self.within_abs_tolerance as f64 / self.replications as f64
    }
}

/// Replicates the Monte-Carlo estimate of a threshold-linear classifier,
/// whose smoothed value is `Φ(W·x/(σ‖x‖₂))`, and counts how often the
/// error interval covers the truth.
#[allow(clippy::too_many_arguments)]
pub fn mc_coverage(
    params: &ParameterVector,
    x: &[f64],
    sigma: f64,
    samples: usize,
    replications: usize,
    noise: &CounterRng,
    a: f64,
    abs_tolerance: f64,
) -> Result<CoverageReport> {
    validate_smoothing(sigma, samples)?;
    if replications == 0 {
        return Err(Error::invalid("replications", "must be at least 1"));
    }
    let model = ThresholdLinear { dim: x.len() };
    check_dim("parameter vector", x.len(), params.len())?;
    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xnorm == 0.0 {
        return Err(Error::invalid("x", "input must be non-zero"));
    }
    let margin: f64 = params.iter().zip(x).map(|(w, v)| w * v).sum();
    let truth = normal_cdf(margin / (sigma * xnorm));
    let mut covered = 0;
    let mut within = 0;
    let mut max_abs_error = 0.0f64;
    for r in 0..replications {
        let sc = SmoothedClassifier::new(&model, params.clone(), sigma, samples, noise.child(r as u64))?;
        let v = sc.predict(x)?;
        let err = (v.value - truth).abs();
        max_abs_error = max_abs_error.max(err);
        if err <= v.error.half_width(a) {
            covered += 1;
        }
        if err <= abs_tolerance {
            within += 1;
        }
    }
    Ok(CoverageReport {
        truth,
        sigma,
        samples,
        replications,
        a,
        abs_tolerance,
        covered,
        within_abs_tolerance: within,
        max_abs_error,
    })
}
