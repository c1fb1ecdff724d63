//! Deterministic base classifiers `f(x; W) ∈ [0, 1]`.
//!
//! The main model is [`Mlp`], a fully connected network with a sigmoid
//! output unit. The small closed-form models in [`toy`] exist so the
//! smoothing machinery can be checked against exact expectations.

mod batch;
mod io;
mod mlp;
pub mod toy;

pub use io::{read_model, write_model, SavedModel};
pub use mlp::{backward, forward, Mlp, MlpScratch};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Features;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::invalid("activation", format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Network shape. The output is always a single sigmoid unit.
///
/// Parameters are flattened layer by layer; within a layer the weight
/// matrix comes first in row-major order (one row per output unit),
/// followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

/// Location of one dense layer inside a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    pub fn len(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }

    pub fn is_empty(&self) -> bool {
        self.outputs == 0
    }
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be positive"));
        }
        Ok(Self {
            input_dim,
            hidden,
            activation,
        })
    }

    /// `input → 32 → 16 → 1` with ReLU hidden units.
    pub fn default_for(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![32, 16],
            activation: Activation::Relu,
        }
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut out = Vec::with_capacity(self.hidden.len() + 1);
        let mut inputs = self.input_dim;
        let mut offset = 0;
        for &outputs in self.hidden.iter().chain(std::iter::once(&1)) {
            let shape = LayerShape {
                inputs,
                outputs,
                offset,
            };
            offset += shape.len();
            inputs = outputs;
            out.push(shape);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(LayerShape::len).sum()
    }

    /// Splits a flat parameter vector into per-layer `(weights, bias)`.
    pub fn unflatten(&self, params: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        crate::error::check_dim("parameter vector", self.num_params(), params.len())?;
        Ok(self
            .layers()
            .iter()
            .map(|l| (params[l.weight_range()].to_vec(), params[l.bias_range()].to_vec()))
            .collect())
    }

    /// Inverse of [`Architecture::unflatten`].
    pub fn flatten(&self, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
        let shapes = self.layers();
        crate::error::check_dim("layer count", shapes.len(), layers.len())?;
        let mut out = Vec::with_capacity(self.num_params());
        for (shape, (w, b)) in shapes.iter().zip(layers) {
            crate::error::check_dim("layer weights", shape.inputs * shape.outputs, w.len())?;
            crate::error::check_dim("layer bias", shape.outputs, b.len())?;
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        Ok(out)
    }
}

/// A deterministic map `(W, x) ↦ f(x; W) ∈ [0, 1]`.
pub trait BaseClassifier: Send + Sync {
    fn num_params(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn predict(&self, params: &[f64], x: &[f64]) -> f64;

    /// Evaluates every row of `xs` under the same parameters.
    fn predict_rows(&self, params: &[f64], xs: &Features, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(xs.iter_rows()) {
            *o = self.predict(params, x);
        }
    }
}

/// One labelled example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: f64,
}

/// Base classifiers with an exact loss gradient.
pub trait Differentiable: BaseClassifier {
    /// Adds `scale · ∇_W L(f(x; W), y)` to `grad` and returns `L`.
    fn add_loss_gradient(&self, params: &[f64], example: Example<'_>, scale: f64, grad: &mut [f64]) -> f64;

    /// Adds `scale · Σ_i ∇_W L(f(x_i; W), y_i)` to `grad`; returns the summed loss.
    fn add_batch_loss_gradient(
        &self,
        params: &[f64],
        batch: &[Example<'_>],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        batch
            .iter()
            .map(|&e| self.add_loss_gradient(params, e, scale, grad))
            .sum()
    }
}

/// Supported training losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    BinaryCrossEntropy,
}

pub const PROB_CLAMP: f64 = 1e-7;

impl LossKind {
    /// Loss value and derivative with respect to the output logit, given
    /// the sigmoid output `p`.
    #[inline]
    pub fn value_and_logit_grad(self, p: f64, y: f64) -> (f64, f64) {
        match self {
            LossKind::BinaryCrossEntropy => {
                let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
                // The clamp is flat outside its range.
                let g = if p == pc { p - y } else { 0.0 };
                (loss, g)
            }
        }
    }

    pub fn value(self, p: f64, y: f64) -> f64 {
        self.value_and_logit_grad(p, y).0
    }
}

pub(crate) fn check_label(y: f64) -> Result<()> {
    if y == 0.0 || y == 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLabel(y))
    }
}
