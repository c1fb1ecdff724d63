//! End-to-end runs on a grouped dataset: train the group classifiers,
//! predict with the averaged and per-group models, and evaluate.

use serde::{Deserialize, Serialize};

use crate::data::{GroupedDataset, Subset};
use crate::error::{check_dim, Error, Result};
use crate::features::Features;
use crate::metrics::{epsilon_fairness, CertificateBound, EpsilonEntry, EvaluationReport, Exponent};
use crate::model::{Activation, Architecture, BaseClassifier, Mlp};
use crate::params::ParameterVector;
use crate::rng::{CounterRng, Stream};
use crate::smoothing::{smoothed_predictions, McErrorReport, SmoothedValue, EVAL_SAMPLES, PAIRED_CHECK_MULTIPLIER};
use crate::train::{
    average_params, certify, init_params, train_fair, EpochRecord, FairnessCertificate, TrainState, TrainingConfig, Variant,
};

/// Hidden layers of the group networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            activation: Activation::Relu,
        }
    }
}

impl ModelSpec {
    pub fn architecture(&self, input_dim: usize) -> Result<Architecture> {
        Architecture::new(input_dim, self.hidden.clone(), self.activation)
    }
}

/// Trained group parameters and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub arch: Architecture,
    pub variant: Variant,
    pub sigma: f64,
    pub group_params: Vec<ParameterVector>,
    pub averaged: ParameterVector,
}

/// Per-row predictions of the averaged model and of every group model.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub overall: Vec<SmoothedValue>,
    pub members: Vec<Vec<SmoothedValue>>,
}

impl Predictions {
    pub fn overall_values(&self) -> Vec<f64> {
        self.overall.iter().map(|v| v.value).collect()
    }

    /// Rows `positions` only.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self {
            overall: positions.iter().map(|&i| self.overall[i]).collect(),
            members: self
                .members
                .iter()
                .map(|m| positions.iter().map(|&i| m[i]).collect())
                .collect(),
        }
    }
}

impl TrainedModel {
    pub fn from_group_params(arch: Architecture, variant: Variant, sigma: f64, group_params: Vec<ParameterVector>) -> Result<Self> {
        for p in &group_params {
            check_dim("parameter vector", arch.num_params(), p.len())?;
        }
        let averaged = average_params(&group_params)?;
        Ok(Self {
            arch,
            variant,
            sigma,
            group_params,
            averaged,
        })
    }

    pub fn certificate(&self) -> Result<FairnessCertificate> {
        certify(&self.group_params, self.sigma)
    }

    /// Predictions on every row of `xs`. Smoothed variants use `samples`
    /// draws from the `McEval` stream of `seed`; the disparity-only variant
    /// uses the base networks directly.
    pub fn predict(&self, xs: &Features, samples: usize, seed: u64) -> Result<Predictions> {
        let mlp = Mlp::new(self.arch.clone());
        let (unique, index) = xs.dedup();
        let mut all = vec![self.averaged.clone()];
        all.extend(self.group_params.iter().cloned());
        let values: Vec<Vec<SmoothedValue>> = if self.variant.smoothed() {
            let noise = CounterRng::new(seed, Stream::McEval, &[]);
            smoothed_predictions(&mlp, &all, self.sigma, samples, &noise, &unique)?
        } else {
            all.iter()
                .map(|p| {
                    let mut out = vec![0.0; unique.rows()];
                    mlp.predict_rows(p, &unique, &mut out);
                    out.into_iter()
                        .map(|value| SmoothedValue {
                            value,
                            error: McErrorReport {
                                sample_count: 1,
                                variance: 0.0,
                            },
                        })
                        .collect()
                })
                .collect()
        };
        let expand = |v: &Vec<SmoothedValue>| index.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Predictions {
            overall: expand(&values[0]),
            members: values[1..].iter().map(expand).collect(),
        })
    }
}

/// Trains on the training split of `ds`, starting from the shared
/// initialization (or from `resume`).
pub fn train_model<F>(
    ds: &GroupedDataset,
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    resume: Option<TrainState>,
    on_epoch: F,
) -> Result<TrainedModel>
where
    F: FnMut(&EpochRecord, &TrainState) -> Result<()>,
{
    let arch = spec.architecture(ds.features().cols())?;
    let mlp = Mlp::new(arch.clone());
    let data = ds.training_groups()?;
    let groups: Vec<_> = data.iter().map(|g| g.as_train_group()).collect();
    let state = match resume {
        Some(s) => s,
        None => TrainState::initial(&init_params(&arch, cfg.master_seed), groups.len()),
    };
    let done = train_fair(&mlp, &groups, cfg, state, on_epoch)?;
    TrainedModel::from_group_params(arch, cfg.variant, cfg.sigma, done.params)
}

/// Exponents reported by [`evaluate`].
pub const REPORTED_EXPONENTS: [Exponent; 3] = [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity];

/// Metrics of the averaged model on `subset`, ε-fairness of every group
/// model on its own rows, and the certificate bound check.
pub fn evaluate(model: &TrainedModel, subset: &Subset, preds: &Predictions, num_groups: usize) -> Result<EvaluationReport> {
    check_dim("predictions", subset.len(), preds.overall.len())?;
    check_dim("group models", num_groups, preds.members.len())?;
    if subset.is_empty() {
        return Err(Error::Empty("evaluation rows"));
    }
    let mut report = EvaluationReport::compute(&preds.overall_values(), &subset.labels, &subset.groups, num_groups)?;
    let epsilon = model.certificate()?.epsilon;
    let mut bound = CertificateBound {
        epsilon,
        max_gap: 0.0,
        max_tolerance: 0.0,
        violations: 0,
    };
    for k in 0..num_groups {
        let rows: Vec<usize> = (0..subset.len()).filter(|&i| subset.groups[i] == k).collect();
        let h: Vec<f64> = rows.iter().map(|&i| preds.overall[i].value).collect();
        let hk: Vec<f64> = rows.iter().map(|&i| preds.members[k][i].value).collect();
        for p in REPORTED_EXPONENTS {
            report.epsilon_fairness.push(EpsilonEntry {
                group: k,
                p,
                value: epsilon_fairness(&h, &hk, p)?,
            });
        }
        for &i in &rows {
            let (a, b) = (preds.overall[i], preds.members[k][i]);
            let gap = (a.value - b.value).abs();
            let tol = PAIRED_CHECK_MULTIPLIER * (a.error.variance / a.error.sample_count as f64 + b.error.variance / b.error.sample_count as f64).sqrt();
            bound.max_gap = bound.max_gap.max(gap);
            bound.max_tolerance = bound.max_tolerance.max(tol);
            if gap > epsilon + tol {
                bound.violations += 1;
            }
        }
    }
    report.certificate = Some(bound);
    Ok(report)
}

/// Default evaluation sample count, re-exported for convenience.
pub const DEFAULT_EVAL_SAMPLES: usize = EVAL_SAMPLES;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, Split};
    use crate::train::certificate_epsilon;

    fn small_config(variant: Variant) -> TrainingConfig {
        TrainingConfig {
            epochs: 4,
            batch_size: 32,
            sigma: 0.4,
            n_train_samples: 4,
            variant,
            ..TrainingConfig::default()
        }
    }

    fn spec() -> ModelSpec {
        ModelSpec {
            hidden: vec![6],
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn trained_model_respects_its_certificate_on_test_rows() {
        let ds = synthetic::two_group(200, 3).unwrap();
        let model = train_model(&ds, &spec(), &small_config(Variant::Full), None, |_, _| Ok(())).unwrap();
        let test = ds.part(Split::Test);
        let preds = model.predict(&test.features, 2_000, 3).unwrap();
        let report = evaluate(&model, &test, &preds, 2).unwrap();
        let bound = report.certificate.unwrap();
        assert!(bound.holds(), "{bound:?}");
        assert!(bound.max_gap <= bound.epsilon + bound.max_tolerance);
        assert!((0.0..=1.0).contains(&report.accuracy));
        assert_eq!(report.rows, test.len());
    }

    #[test]
    fn epsilon_falls_as_sigma_grows_for_fixed_parameters() {
        let ds = synthetic::two_group(100, 1).unwrap();
        let model = train_model(&ds, &spec(), &small_config(Variant::Full), None, |_, _| Ok(())).unwrap();
        let d = model.certificate().unwrap().max_distance;
        assert!(d > 0.0);
        let eps: Vec<f64> = [0.25, 0.5, 1.0, 2.0].iter().map(|&s| certificate_epsilon(2, d, s)).collect();
        assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
    }

    #[test]
    fn disparity_only_predictions_are_exact() {
        let ds = synthetic::two_group(100, 2).unwrap();
        let model = train_model(&ds, &spec(), &small_config(Variant::DisparityOnly), None, |_, _| Ok(())).unwrap();
        let test = ds.part(Split::Test);
        let a = model.predict(&test.features, 10, 0).unwrap();
        let b = model.predict(&test.features, 5_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.overall.iter().all(|v| v.error.variance == 0.0));
    }

    #[test]
    fn identical_runs_give_identical_parameters() {
        let ds = synthetic::two_group(100, 4).unwrap();
        let cfg = small_config(Variant::Full);
        let a = train_model(&ds, &spec(), &cfg, None, |_, _| Ok(())).unwrap();
        let b = train_model(&ds, &spec(), &cfg, None, |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
    }
}
