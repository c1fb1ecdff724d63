use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::Features;
use crate::model::BaseClassifier;
use crate::params::ParameterVector;
use crate::rng::CounterRng;
use crate::smoothing::{paired_predictions, SmoothedClassifier, PAIRED_CHECK_MULTIPLIER};

pub const CERTIFICATE_SCHEMA_VERSION: u32 = 1;

fn check_lengths(ws: &[ParameterVector]) -> Result<usize> {
    let first = ws.first().ok_or(Error::Empty("parameter set"))?;
    for w in ws {
        check_dim("parameter vector", first.len(), w.len())?;
    }
    Ok(first.len())
}

/// Coordinate-wise mean `W* = (W₁ + … + W_K)/K`.
pub fn average_params(ws: &[ParameterVector]) -> Result<ParameterVector> {
    let m = check_lengths(ws)?;
    let k = ws.len() as f64;
    let mut out = vec![0.0; m];
    for w in ws {
        for (o, v) in out.iter_mut().zip(w.iter()) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= k);
    Ok(ParameterVector::from_vec_unchecked(out))
}

/// `max_{k<l} ‖W_k − W_l‖₂`; 0 for a single vector.
pub fn pairwise_max_distance(ws: &[ParameterVector]) -> Result<f64> {
    check_lengths(ws)?;
    let mut d = 0.0f64;
    for (i, a) in ws.iter().enumerate() {
        for b in &ws[i + 1..] {
            d = d.max(a.distance(b)?);
        }
    }
    Ok(d)
}

/// Mean of `‖W_k − W_l‖₂` over unordered pairs; 0 for a single vector.
pub fn mean_pairwise_distance(ws: &[ParameterVector]) -> Result<f64> {
    check_lengths(ws)?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in ws.iter().enumerate() {
        for b in &ws[i + 1..] {
            total += a.distance(b)?;
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
}

/// `ε = (K−1)·d / (√(2π)·K·σ)`.
pub fn certificate_epsilon(groups: usize, d: f64, sigma: f64) -> f64 {
    let k = groups as f64;
    (k - 1.0) * d / ((2.0 * std::f64::consts::PI).sqrt() * k * sigma)
}

/// The σ at which `K` classifiers `d` apart would be certified at `epsilon`.
pub fn implied_sigma(groups: usize, d: f64, epsilon: f64) -> Result<f64> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
    }
    let k = groups as f64;
    Ok((k - 1.0) * d / ((2.0 * std::f64::consts::PI).sqrt() * k * epsilon))
}

/// Input-agnostic bound on `|N̂(W*)(x) − N̂(W_k)(x)|` for every group `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessCertificate {
    pub schema_version: u32,
    pub groups: usize,
    pub sigma: f64,
    /// Largest pairwise parameter distance.
    pub max_distance: f64,
    /// Mean pairwise parameter distance (reported, not certified).
    pub mean_distance: f64,
    pub epsilon: f64,
    /// `‖W* − W_k‖₂` per group.
    pub per_group_distances: Vec<f64>,
}

impl FairnessCertificate {
    /// Recomputes ε from the stored `(K, d, σ)`.
    pub fn recomputed_epsilon(&self) -> f64 {
        certificate_epsilon(self.groups, self.max_distance, self.sigma)
    }
}

pub fn certify(ws: &[ParameterVector], sigma: f64) -> Result<FairnessCertificate> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    let avg = average_params(ws)?;
    let d = pairwise_max_distance(ws)?;
    Ok(FairnessCertificate {
        schema_version: CERTIFICATE_SCHEMA_VERSION,
        groups: ws.len(),
        sigma,
        max_distance: d,
        mean_distance: mean_pairwise_distance(ws)?,
        epsilon: certificate_epsilon(ws.len(), d, sigma),
        per_group_distances: ws.iter().map(|w| avg.distance(w)).collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGap {
    pub group: usize,
    pub checked: usize,
    pub max_gap: f64,
    pub max_tolerance: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub epsilon: f64,
    pub groups: Vec<GroupGap>,
}

impl CertificateCheck {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.violations == 0)
    }

    pub fn max_gap(&self) -> f64 {
        self.groups.iter().map(|g| g.max_gap).fold(0.0, f64::max)
    }
}

/// Paired Monte-Carlo check of `|N̂(W*)(x) − N̂(W_k)(x)| ≤ ε` on the inputs
/// of each group, with `4·√(V̂*/N + V̂_k/N)` of slack.
pub fn check_certificate_empirically<M: BaseClassifier + ?Sized>(
    model: &M,
    ws: &[ParameterVector],
    sigma: f64,
    samples: usize,
    noise: &CounterRng,
    xs_per_group: &[Features],
) -> Result<CertificateCheck> {
    check_dim("group inputs", ws.len(), xs_per_group.len())?;
    let cert = certify(ws, sigma)?;
    let avg = SmoothedClassifier::new(model, average_params(ws)?, sigma, samples, noise.clone())?;
    let mut groups = Vec::with_capacity(ws.len());
    for (k, (w, xs)) in ws.iter().zip(xs_per_group).enumerate() {
        let (unique, _) = xs.dedup();
        let member = avg.with_params(w.clone())?;
        let (a, b) = paired_predictions(&avg, &member, &unique)?;
        let mut gap = GroupGap {
            group: k,
            checked: unique.rows(),
            max_gap: 0.0,
            max_tolerance: 0.0,
            violations: 0,
        };
        for (va, vb) in a.iter().zip(&b) {
            let diff = (va.value - vb.value).abs();
            let tol = PAIRED_CHECK_MULTIPLIER * ((va.error.variance + vb.error.variance) / samples as f64).sqrt();
            gap.max_gap = gap.max_gap.max(diff);
            gap.max_tolerance = gap.max_tolerance.max(tol);
            if diff > cert.epsilon + tol {
                gap.violations += 1;
            }
        }
        groups.push(gap);
    }
    Ok(CertificateCheck {
        epsilon: cert.epsilon,
        groups,
    })
}
