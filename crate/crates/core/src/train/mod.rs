//! Coupled training of one classifier per group.
//!
//! Every group classifier starts from the same initial parameters and is
//! updated synchronously with
//!
//! ```text
//! W_k ← W_k − η·∇L̂_k(W_k) − 2αη·Σ_{l≠k} (W_k − W_l)
//! ```
//!
//! where `∇L̂_k` is the Monte-Carlo gradient of the smoothed loss on a
//! minibatch of group `k` and every `W_l` is read from the start of the step.

mod certificate;

pub use certificate::{
    average_params, certificate_epsilon, certify, check_certificate_empirically, implied_sigma, mean_pairwise_distance,
    pairwise_max_distance, CertificateCheck, FairnessCertificate, GroupGap, CERTIFICATE_SCHEMA_VERSION,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::Features;
use crate::model::{Architecture, Differentiable, Example};
use crate::params::ParameterVector;
use crate::rng::{shuffled_indices, CounterRng, Stream};
use crate::smoothing::{smooth_gradient, smooth_gradient_with_offsets, validate_smoothing, TRAIN_SAMPLES};

/// Which parts of the method are switched on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Smoothed losses plus the parameter disparity term.
    #[default]
    Full,
    /// Smoothed losses only; α is forced to 0.
    SmoothingOnly,
    /// Disparity term on unsmoothed base classifiers, evaluated without noise.
    DisparityOnly,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::SmoothingOnly => "smoothing-only",
            Variant::DisparityOnly => "disparity-only",
        }
    }

    /// Whether predictions use the smoothed classifier.
    pub fn smoothed(self) -> bool {
        !matches!(self, Variant::DisparityOnly)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "smoothing-only" => Ok(Variant::SmoothingOnly),
            "disparity-only" => Ok(Variant::DisparityOnly),
            _ => Err(Error::invalid(
                "variant",
                format!("unknown variant `{s}` (expected full, smoothing-only or disparity-only)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sigma: f64,
    pub n_train_samples: usize,
    pub master_seed: u64,
    pub variant: Variant,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            eta: 0.05,
            epochs: 320,
            batch_size: 128,
            sigma: 0.25,
            n_train_samples: TRAIN_SAMPLES,
            master_seed: 0,
            variant: Variant::Full,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha", format!("must be finite and ≥ 0, got {}", self.alpha)));
        }
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(Error::invalid("eta", format!("must be finite and > 0, got {}", self.eta)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        validate_smoothing(self.sigma, self.n_train_samples)
    }

    /// α after the variant is applied.
    pub fn effective_alpha(&self) -> f64 {
        match self.variant {
            Variant::SmoothingOnly => 0.0,
            _ => self.alpha,
        }
    }
}

/// Training rows of one group.
#[derive(Debug, Clone, Copy)]
pub struct TrainGroup<'a> {
    /// Stable identifier; keys the group's noise and batch order.
    pub id: u64,
    pub features: &'a Features,
    pub labels: &'a [f64],
}

/// Fan-in scaled uniform initialization: every weight and bias of a layer
/// with `n` inputs is drawn from `U(−1/√n, 1/√n)`, layer by layer in
/// flattening order, from the `Init` stream of `master_seed`.
pub fn init_params(arch: &Architecture, master_seed: u64) -> ParameterVector {
    use rand::Rng;
    let mut rng = CounterRng::new(master_seed, Stream::Init, &[]).at(0);
    let mut out = Vec::with_capacity(arch.num_params());
    for layer in arch.layers() {
        let bound = 1.0 / (layer.inputs as f64).sqrt();
        for _ in 0..layer.outputs * (layer.inputs + 1) {
            out.push(rng.random_range(-bound..bound));
        }
    }
    ParameterVector::from_vec_unchecked(out)
}

/// One synchronous coupled update. `grads[k]` is the loss gradient of
/// group `k` at `params[k]`.
pub fn fair_step(params: &[ParameterVector], grads: &[ParameterVector], eta: f64, alpha: f64) -> Result<Vec<ParameterVector>> {
    if params.is_empty() {
        return Err(Error::Empty("parameter set"));
    }
    check_dim("gradient count", params.len(), grads.len())?;
    let m = params[0].len();
    for (p, g) in params.iter().zip(grads) {
        check_dim("parameter vector", m, p.len())?;
        check_dim("gradient", m, g.len())?;
    }
    let mut out = Vec::with_capacity(params.len());
    for (k, (wk, gk)) in params.iter().zip(grads).enumerate() {
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let mut pull = 0.0;
            for (l, wl) in params.iter().enumerate() {
                if l != k {
                    pull += wk[i] - wl[i];
                }
            }
            next.push(wk[i] - eta * gk[i] - 2.0 * alpha * eta * pull);
        }
        out.push(ParameterVector::from_vec_unchecked(next));
    }
    Ok(out)
}

/// Position of one group's minibatch cursor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCursor {
    /// Number of completed passes over the group.
    pub pass: u64,
    pub position: usize,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub params: Vec<ParameterVector>,
    pub cursors: Vec<GroupCursor>,
}

impl TrainState {
    /// Fresh state with every group at the shared initialization.
    pub fn initial(init: &ParameterVector, groups: usize) -> Self {
        Self {
            epoch: 0,
            step: 0,
            params: vec![init.clone(); groups],
            cursors: vec![GroupCursor::default(); groups],
        }
    }
}

/// Per-epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    /// Mean smoothed minibatch loss of each group over the epoch.
    pub group_loss: Vec<f64>,
    pub max_distance: f64,
    pub mean_distance: f64,
    pub epsilon: f64,
}

fn next_batch(group: &TrainGroup<'_>, cursor: &mut GroupCursor, order: &mut Vec<usize>, batch_size: usize, seed: u64) -> Vec<usize> {
    let n = group.labels.len();
    let take = batch_size.min(n);
    let mut batch = Vec::with_capacity(take);
    while batch.len() < take {
        if cursor.position == n {
            cursor.pass += 1;
            cursor.position = 0;
            *order = batch_order(seed, group.id, cursor.pass, n);
        }
        batch.push(order[cursor.position]);
        cursor.position += 1;
    }
    batch
}

fn batch_order(seed: u64, group: u64, pass: u64, n: usize) -> Vec<usize> {
    shuffled_indices(&CounterRng::new(seed, Stream::BatchOrder, &[group]), pass, n)
}

fn group_gradient<M: Differentiable + ?Sized>(
    model: &M,
    cfg: &TrainingConfig,
    params: &ParameterVector,
    group: &TrainGroup<'_>,
    rows: &[usize],
    step: u64,
) -> Result<(ParameterVector, f64)> {
    let batch: Vec<Example<'_>> = rows
        .iter()
        .map(|&i| Example {
            x: group.features.row(i),
            y: group.labels[i],
        })
        .collect();
    if cfg.variant.smoothed() {
        let noise = CounterRng::new(cfg.master_seed, Stream::McTrain, &[group.id, step]);
        smooth_gradient(model, params, cfg.sigma, cfg.n_train_samples, &noise, &batch)
    } else {
        smooth_gradient_with_offsets(model, params, &[vec![0.0; params.len()]], &batch)
    }
}

/// Runs (or resumes) coupled training. `on_epoch` sees every finished
/// epoch together with the state needed to resume after it.
pub fn train_fair<M, F>(
    model: &M,
    groups: &[TrainGroup<'_>],
    cfg: &TrainingConfig,
    mut state: TrainState,
    mut on_epoch: F,
) -> Result<TrainState>
where
    M: Differentiable + ?Sized,
    F: FnMut(&EpochRecord, &TrainState) -> Result<()>,
{
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::Empty("groups"));
    }
    check_dim("group state", groups.len(), state.params.len())?;
    check_dim("group cursors", groups.len(), state.cursors.len())?;
    for (k, g) in groups.iter().enumerate() {
        if g.labels.is_empty() {
            return Err(Error::EmptyGroup(k));
        }
        check_dim("group labels", g.features.rows(), g.labels.len())?;
        check_dim("feature vector", model.input_dim(), g.features.cols())?;
        for &y in g.labels {
            crate::model::check_label(y)?;
        }
    }
    for p in &state.params {
        check_dim("parameter vector", model.num_params(), p.len())?;
    }
    let alpha = cfg.effective_alpha();
    let largest = groups.iter().map(|g| g.labels.len()).max().unwrap_or(0);
    let steps_per_epoch = largest.div_ceil(cfg.batch_size);
    let mut orders: Vec<Vec<usize>> = groups
        .iter()
        .zip(&state.cursors)
        .map(|(g, c)| batch_order(cfg.master_seed, g.id, c.pass, g.labels.len()))
        .collect();

    while state.epoch < cfg.epochs {
        let mut loss_sums = vec![0.0; groups.len()];
        for _ in 0..steps_per_epoch {
            let batches: Vec<Vec<usize>> = groups
                .iter()
                .zip(state.cursors.iter_mut())
                .zip(orders.iter_mut())
                .map(|((g, c), o)| next_batch(g, c, o, cfg.batch_size, cfg.master_seed))
                .collect();
            let step = state.step;
            let results: Vec<Result<(ParameterVector, f64)>> = groups
                .par_iter()
                .zip(&state.params)
                .zip(&batches)
                .map(|((g, p), rows)| group_gradient(model, cfg, p, g, rows, step))
                .collect();
            let mut grads = Vec::with_capacity(groups.len());
            for (k, r) in results.into_iter().enumerate() {
                let (g, loss) = r?;
                if !loss.is_finite() || !g.is_finite() {
                    return Err(diverged(&state));
                }
                loss_sums[k] += loss;
                grads.push(g);
            }
            let next = fair_step(&state.params, &grads, cfg.eta, alpha)?;
            if next.iter().any(|p| !p.is_finite()) {
                return Err(diverged(&state));
            }
            state.params = next;
            state.step += 1;
        }
        state.epoch += 1;
        let max_distance = pairwise_max_distance(&state.params)?;
        let record = EpochRecord {
            epoch: state.epoch,
            step: state.step,
            group_loss: loss_sums.iter().map(|s| s / steps_per_epoch as f64).collect(),
            max_distance,
            mean_distance: mean_pairwise_distance(&state.params)?,
            epsilon: certificate_epsilon(groups.len(), max_distance, cfg.sigma),
        };
        on_epoch(&record, &state)?;
    }
    Ok(state)
}

fn diverged(state: &TrainState) -> Error {
    Error::Diverged {
        epoch: state.epoch,
        step: state.step as usize,
        last_finite: state.params.clone(),
    }
}
