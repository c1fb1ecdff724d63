//! Gaussian parameter smoothing.
//!
//! The smoothed classifier is `N̂(W)(x) = E_Δ[f(x; W + Δ)]` with
//! `Δ ~ N(0, σ²I)` over the parameters (not the inputs). It is estimated by
//! Monte-Carlo integration over counter-addressed noise draws, so two
//! classifiers built with the same [`CounterRng`] see identical `Δ_j`
//! (common random numbers).

mod checks;
mod engine;
pub mod quadrature;

pub use checks::{
    check_frechet_derivative, check_lipschitz, check_sigma_convergence, frechet_residual, lipschitz_bound, mc_coverage,
    smoothed_directional_derivative, ConvergenceReport, ConvergenceRow, CoverageReport, FrechetLevel, FrechetReport,
    Integrator, LipschitzReport, LipschitzViolation, PAIRED_CHECK_MULTIPLIER,
};
pub(crate) use checks::paired_predictions;
pub use engine::Moments;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::Features;
use crate::model::{BaseClassifier, Differentiable, Example};
use crate::params::ParameterVector;
use crate::rng::CounterRng;

pub(crate) use engine::monte_carlo;

/// Sample count used for certification and evaluation.
pub const EVAL_SAMPLES: usize = 100_000;
/// Default Monte-Carlo sample count per training gradient step.
pub const TRAIN_SAMPLES: usize = 16;

/// Standard normal CDF `Φ`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Error accounting for one Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McErrorReport {
    pub sample_count: usize,
    /// Sample variance of `f(x; W + Δ_j)`.
    pub variance: f64,
}

impl McErrorReport {
    /// `a·√V̂/√N`.
    pub fn half_width(&self, a: f64) -> f64 {
        a * (self.variance / self.sample_count as f64).sqrt()
    }

    /// Probability mass of a standard normal inside `[−a, a]`.
    pub fn confidence(&self, a: f64) -> f64 {
        two_sided_confidence(a)
    }
}

pub fn two_sided_confidence(a: f64) -> f64 {
    libm::erf(a / std::f64::consts::SQRT_2)
}

/// Worst-case Monte-Carlo error interval: half-width `a·v/√N` and its
/// Gaussian confidence, where `v` bounds the spread of the integrand
/// (1 for any `[−1, 1]`-valued classifier).
pub fn mc_error_bound(samples: usize, a: f64, variance_bound: f64) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    if a <= 0.0 || !a.is_finite() {
        return Err(Error::invalid("a", format!("confidence multiplier must be positive, got {a}")));
    }
    if !(variance_bound > 0.0 && variance_bound <= 1.0) {
        return Err(Error::invalid("variance_bound", format!("must lie in (0, 1], got {variance_bound}")));
    }
    Ok((a * variance_bound / (samples as f64).sqrt(), two_sided_confidence(a)))
}

/// One smoothed prediction with its error report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedValue {
    pub value: f64,
    pub error: McErrorReport,
}

/// Checks shared by every smoothing entry point.
pub(crate) fn validate_smoothing(sigma: f64, samples: usize) -> Result<()> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    Ok(())
}

/// A base classifier wrapped with Gaussian parameter noise.
#[derive(Debug, Clone)]
pub struct SmoothedClassifier<'m, M: ?Sized> {
    model: &'m M,
    params: ParameterVector,
    sigma: f64,
    samples: usize,
    noise: CounterRng,
}

impl<'m, M: BaseClassifier + ?Sized> SmoothedClassifier<'m, M> {
    pub fn new(model: &'m M, params: ParameterVector, sigma: f64, samples: usize, noise: CounterRng) -> Result<Self> {
        validate_smoothing(sigma, samples)?;
        check_dim("parameter vector", model.num_params(), params.len())?;
        Ok(Self {
            model,
            params,
            sigma,
            samples,
            noise,
        })
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn noise(&self) -> &CounterRng {
        &self.noise
    }

    /// Same noise, sample count and σ around different parameters.
    pub fn with_params(&self, params: ParameterVector) -> Result<Self> {
        Self::new(self.model, params, self.sigma, self.samples, self.noise.clone())
    }

    /// `(1/N)·Σ_j f(x; W + Δ_j)`.
    pub fn predict(&self, x: &[f64]) -> Result<SmoothedValue> {
        check_dim("feature vector", self.model.input_dim(), x.len())?;
        let xs = Features::new(x.len(), x.to_vec())?;
        Ok(self.predict_rows(&xs)?.remove(0))
    }

    /// Smoothed predictions for every row, all sharing the same `Δ_j`.
    pub fn predict_rows(&self, xs: &Features) -> Result<Vec<SmoothedValue>> {
        check_dim("feature vector", self.model.input_dim(), xs.cols())?;
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let params = self.params.as_slice();
        let model = self.model;
        let moments = monte_carlo(self.samples, params.len(), self.sigma, &self.noise, xs.rows(), |delta, w, out| {
            perturb(params, delta, w);
            model.predict_rows(w, xs, out);
        });
        Ok(moments.into_iter().map(to_value).collect())
    }

    /// Like [`SmoothedClassifier::predict_rows`], but evaluates each distinct
    /// row once.
    pub fn predict_rows_dedup(&self, xs: &Features) -> Result<Vec<SmoothedValue>> {
        let (unique, index) = xs.dedup();
        let values = self.predict_rows(&unique)?;
        Ok(index.into_iter().map(|i| values[i]).collect())
    }
}

/// Smoothed predictions of several parameter vectors on the same rows, all
/// under the same `Δ_j`. Result `[i][r]` is vector `i` on row `r`.
pub fn smoothed_predictions<M: BaseClassifier + ?Sized>(
    model: &M,
    params: &[ParameterVector],
    sigma: f64,
    samples: usize,
    noise: &CounterRng,
    xs: &Features,
) -> Result<Vec<Vec<SmoothedValue>>> {
    validate_smoothing(sigma, samples)?;
    check_dim("feature vector", model.input_dim(), xs.cols())?;
    for p in params {
        check_dim("parameter vector", model.num_params(), p.len())?;
    }
    let rows = xs.rows();
    if rows == 0 || params.is_empty() {
        return Ok(vec![Vec::new(); params.len()]);
    }
    let moments = monte_carlo(samples, model.num_params(), sigma, noise, rows * params.len(), |delta, w, out| {
        for (p, o) in params.iter().zip(out.chunks_mut(rows)) {
            perturb(p, delta, w);
            model.predict_rows(w, xs, o);
        }
    });
    Ok(moments.chunks(rows).map(|c| c.iter().copied().map(to_value).collect()).collect())
}

pub(crate) fn to_value(m: Moments) -> SmoothedValue {
    SmoothedValue {
        value: m.mean,
        error: McErrorReport {
            sample_count: m.count,
            variance: m.variance,
        },
    }
}

pub(crate) fn perturb(params: &[f64], delta: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(params.iter().zip(delta).map(|(w, d)| w + d));
}

/// Monte-Carlo estimate of `∇_W E_Δ[L(f(x; W + Δ), y)]` averaged over a
/// batch, using the same `Δ_j` for every example. Returns the gradient and
/// the mean loss.
pub fn smooth_gradient<M: Differentiable + ?Sized>(
    model: &M,
    params: &ParameterVector,
    sigma: f64,
    samples: usize,
    noise: &CounterRng,
    batch: &[Example<'_>],
) -> Result<(ParameterVector, f64)> {
    validate_smoothing(sigma, samples)?;
    let m = params.len();
    let mut offsets = Vec::with_capacity(samples);
    for j in 0..samples {
        let mut d = vec![0.0; m];
        noise.standard_normal(j as u64, &mut d);
        d.iter_mut().for_each(|v| *v *= sigma);
        offsets.push(d);
    }
    smooth_gradient_with_offsets(model, params, &offsets, batch)
}

/// [`smooth_gradient`] with explicit parameter offsets `Δ_j`.
pub fn smooth_gradient_with_offsets<M: Differentiable + ?Sized>(
    model: &M,
    params: &ParameterVector,
    offsets: &[Vec<f64>],
    batch: &[Example<'_>],
) -> Result<(ParameterVector, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch"));
    }
    if offsets.is_empty() {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let m = model.num_params();
    check_dim("parameter vector", m, params.len())?;
    for e in batch {
        check_dim("feature vector", model.input_dim(), e.x.len())?;
        crate::model::check_label(e.y)?;
    }
    let scale = 1.0 / (offsets.len() * batch.len()) as f64;
    let mut grad = vec![0.0; m];
    let mut w = Vec::with_capacity(m);
    let mut loss = 0.0;
    for d in offsets {
        check_dim("parameter offset", m, d.len())?;
        perturb(params, d, &mut w);
        loss += model.add_batch_loss_gradient(&w, batch, scale, &mut grad);
    }
    Ok((ParameterVector::from_vec_unchecked(grad), loss * scale))
}

#[cfg(test)]
mod tests;
