//! Small base classifiers with closed-form smoothed values, used as
//! oracles for the Monte-Carlo machinery.

use crate::features::Features;

use super::{sigmoid, BaseClassifier, Differentiable, Example, LossKind};

/// `f(x; W) = c` for every input and parameter.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub value: f64,
    pub num_params: usize,
    pub input_dim: usize,
}

impl BaseClassifier for Constant {
    fn num_params(&self) -> usize {
        self.num_params
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn predict(&self, _: &[f64], _: &[f64]) -> f64 {
        self.value
    }
}

impl Differentiable for Constant {
    fn add_loss_gradient(&self, _: &[f64], e: Example<'_>, _: f64, _: &mut [f64]) -> f64 {
        LossKind::BinaryCrossEntropy.value(self.value, e.y)
    }
}

/// `f(x; W) = 1[W·x ≥ 0]`. Under `W + Δ`, `Δ ~ N(0, σ²I)`, the smoothed
/// value is `Φ(W·x / (σ‖x‖₂))`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdLinear {
    pub dim: usize,
}

impl BaseClassifier for ThresholdLinear {
    fn num_params(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn predict(&self, w: &[f64], x: &[f64]) -> f64 {
        let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        if s >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Logistic regression without bias: `f(x; W) = sigmoid(W·x)`.
#[derive(Debug, Clone, Copy)]
pub struct SigmoidLinear {
    pub dim: usize,
}

impl BaseClassifier for SigmoidLinear {
    fn num_params(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn predict(&self, w: &[f64], x: &[f64]) -> f64 {
        sigmoid(w.iter().zip(x).map(|(a, b)| a * b).sum())
    }
}

impl Differentiable for SigmoidLinear {
    fn add_loss_gradient(&self, w: &[f64], e: Example<'_>, scale: f64, grad: &mut [f64]) -> f64 {
        let p = self.predict(w, e.x);
        let (loss, g) = LossKind::BinaryCrossEntropy.value_and_logit_grad(p, e.y);
        for (gi, xi) in grad.iter_mut().zip(e.x) {
            *gi += scale * g * xi;
        }
        loss
    }
}

/// `f(x; W) = clamp(offset + slope·(W·x), 0, 1)`: affine in `W` wherever the
/// clamp is inactive.
#[derive(Debug, Clone, Copy)]
pub struct ClampedAffine {
    pub dim: usize,
    pub offset: f64,
    pub slope: f64,
}

impl ClampedAffine {
    /// Directional derivative `∂f/∂W · δ` where the clamp is inactive.
    pub fn directional_derivative(&self, x: &[f64], delta: &[f64]) -> f64 {
        self.slope * delta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl BaseClassifier for ClampedAffine {
    fn num_params(&self) -> usize {
        self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn predict(&self, w: &[f64], x: &[f64]) -> f64 {
        let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        (self.offset + self.slope * s).clamp(0.0, 1.0)
    }
    fn predict_rows(&self, w: &[f64], xs: &Features, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(xs.iter_rows()) {
            *o = self.predict(w, x);
        }
    }
}
