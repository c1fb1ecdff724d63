use crate::error::{check_dim, Result};
use crate::features::Features;
use crate::params::ParameterVector;

use super::{check_label, sigmoid, Architecture, BaseClassifier, Differentiable, Example, LayerShape, LossKind};

/// Fully connected network with a sigmoid output unit.
#[derive(Debug, Clone)]
pub struct Mlp {
    arch: Architecture,
    layers: Vec<LayerShape>,
    num_params: usize,
    loss: LossKind,
}

/// Reusable buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct MlpScratch {
    // pre-activations and activations per layer (hidden layers + output)
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(arch: Architecture) -> Self {
        let layers = arch.layers();
        let num_params = arch.num_params();
        Self {
            arch,
            layers,
            num_params,
            loss: LossKind::BinaryCrossEntropy,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub(super) fn layer_shapes(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn scratch(&self) -> MlpScratch {
        let widths: Vec<usize> = self.layers.iter().map(|l| l.outputs).collect();
        MlpScratch {
            z: widths.iter().map(|&w| vec![0.0; w]).collect(),
            a: widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    /// Forward pass without dimension checks. Fills `scratch` so that a
    /// following [`Mlp::backward_into`] can reuse it.
    pub fn forward_into(&self, params: &[f64], x: &[f64], scratch: &mut MlpScratch) -> f64 {
        let last = self.layers.len() - 1;
        for (li, shape) in self.layers.iter().enumerate() {
            let (before, rest) = scratch.a.split_at_mut(li);
            let input: &[f64] = if li == 0 { x } else { &before[li - 1] };
            let w = &params[shape.weight_range()];
            let b = &params[shape.bias_range()];
            let z = &mut scratch.z[li];
            for o in 0..shape.outputs {
                let row = &w[o * shape.inputs..(o + 1) * shape.inputs];
                z[o] = b[o] + dot(row, input);
            }
            let a = &mut rest[0];
            if li == last {
                a[0] = sigmoid(z[0]);
            } else {
                for (ai, &zi) in a.iter_mut().zip(z.iter()) {
                    *ai = self.arch.activation.apply(zi);
                }
            }
        }
        scratch.a[last][0]
    }

    /// Adds `scale · ∂L/∂W` to `grad` after a call to [`Mlp::forward_into`]
    /// with the same `params` and `x`. Returns the loss.
    pub fn backward_into(&self, params: &[f64], x: &[f64], y: f64, scale: f64, scratch: &mut MlpScratch, grad: &mut [f64]) -> f64 {
        let last = self.layers.len() - 1;
        let p = scratch.a[last][0];
        let (loss, g_out) = self.loss.value_and_logit_grad(p, y);
        scratch.delta[last][0] = g_out;
        for li in (0..=last).rev() {
            let shape = self.layers[li];
            let delta = std::mem::take(&mut scratch.delta[li]);
            let input: &[f64] = if li == 0 { x } else { &scratch.a[li - 1] };
            let gw = shape.weight_range();
            let gb = shape.bias_range();
            for o in 0..shape.outputs {
                let d = delta[o] * scale;
                if d == 0.0 {
                    continue;
                }
                grad[gb.start + o] += d;
                let row = &mut grad[gw.start + o * shape.inputs..gw.start + (o + 1) * shape.inputs];
                for (g, &xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if li > 0 {
                let w = &params[gw];
                let prev = &mut scratch.delta[li - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..shape.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * shape.inputs..(o + 1) * shape.inputs];
                    for (pv, &wi) in prev.iter_mut().zip(row) {
                        *pv += d * wi;
                    }
                }
                let act = self.arch.activation;
                for ((pv, &z), &a) in prev.iter_mut().zip(&scratch.z[li - 1]).zip(&scratch.a[li - 1]) {
                    *pv *= act.derivative(z, a);
                }
            }
            scratch.delta[li] = delta;
        }
        loss
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators let the compiler vectorize
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

impl BaseClassifier for Mlp {
    fn num_params(&self) -> usize {
        self.num_params
    }

    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    fn predict(&self, params: &[f64], x: &[f64]) -> f64 {
        self.forward_into(params, x, &mut self.scratch())
    }

    fn predict_rows(&self, params: &[f64], xs: &Features, out: &mut [f64]) {
        self.predict_block_rows(params, xs.as_slice(), &mut out[..xs.rows()]);
    }
}

impl Differentiable for Mlp {
    fn add_loss_gradient(&self, params: &[f64], e: Example<'_>, scale: f64, grad: &mut [f64]) -> f64 {
        let mut s = self.scratch();
        self.forward_into(params, e.x, &mut s);
        self.backward_into(params, e.x, e.y, scale, &mut s, grad)
    }

    fn add_batch_loss_gradient(&self, params: &[f64], batch: &[Example<'_>], scale: f64, grad: &mut [f64]) -> f64 {
        self.batch_gradient(params, batch, scale, self.loss, grad)
    }
}

/// `f(x; W)` for the network described by `arch`.
pub fn forward(arch: &Architecture, params: &ParameterVector, x: &[f64]) -> Result<f64> {
    check_dim("parameter vector", arch.num_params(), params.len())?;
    check_dim("feature vector", arch.input_dim, x.len())?;
    Ok(Mlp::new(arch.clone()).predict(params, x))
}

/// Gradient of the loss `L(f(x; W), y)` with respect to `W`.
pub fn backward(arch: &Architecture, params: &ParameterVector, x: &[f64], y: f64, loss: LossKind) -> Result<ParameterVector> {
    check_dim("parameter vector", arch.num_params(), params.len())?;
    check_dim("feature vector", arch.input_dim, x.len())?;
    check_label(y)?;
    let mut mlp = Mlp::new(arch.clone());
    mlp.loss = loss;
    let mut grad = vec![0.0; mlp.num_params];
    mlp.add_loss_gradient(params, Example { x, y }, 1.0, &mut grad);
    Ok(ParameterVector::from_vec_unchecked(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::Activation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(m: usize, scale: f64, rng: &mut impl Rng) -> ParameterVector {
        ParameterVector::new((0..m).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_one_half() {
        let arch = Architecture::default_for(5);
        let w = ParameterVector::zeros(arch.num_params());
        for x in [[0.0; 5], [1.0, -2.0, 3.0, 0.5, 9.0]] {
            assert_eq!(forward(&arch, &w, &x).unwrap(), 0.5);
        }
    }

    #[test]
    fn single_linear_layer_matches_hand_value() {
        let arch = Architecture::new(2, vec![], Activation::Relu).unwrap();
        let w = ParameterVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let p = forward(&arch, &w, &[2.0, 5.0]).unwrap();
        // 1 / (1 + e^-2)
        assert!((p - 0.880_797_077_977_882_3).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors_report_sizes() {
        let arch = Architecture::default_for(3);
        let w = ParameterVector::zeros(arch.num_params());
        match forward(&arch, &w, &[1.0]) {
            Err(Error::DimensionMismatch { expected: 3, actual: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let short = ParameterVector::zeros(4);
        assert!(matches!(
            forward(&arch, &short, &[0.0; 3]),
            Err(Error::DimensionMismatch { actual: 4, .. })
        ));
    }

    #[test]
    fn backward_rejects_non_binary_label() {
        let arch = Architecture::default_for(2);
        let w = ParameterVector::zeros(arch.num_params());
        assert!(matches!(
            backward(&arch, &w, &[0.0, 1.0], 0.5, LossKind::BinaryCrossEntropy),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        // output saturates to the label; the clamped loss is flat there
        let arch = Architecture::new(2, vec![], Activation::Relu).unwrap();
        let w = ParameterVector::new(vec![0.0, 0.0, 40.0]).unwrap();
        let g = backward(&arch, &w, &[0.0, 0.0], 1.0, LossKind::BinaryCrossEntropy).unwrap();
        assert!(g.norm() <= 1e-8);
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let arch = Architecture::default_for(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_params(arch.num_params(), 0.5, &mut rng);
        let x = [0.3, -1.0, 0.0, 2.0];
        let a = backward(&arch, &w, &x, 1.0, LossKind::BinaryCrossEntropy).unwrap();
        let b = backward(&arch, &w, &x, 1.0, LossKind::BinaryCrossEntropy).unwrap();
        let bits = |p: &ParameterVector| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    /// Central-difference oracle on the scalar loss.
    fn finite_difference(arch: &Architecture, w: &ParameterVector, x: &[f64], y: f64, h: f64) -> Vec<f64> {
        let loss = |p: &[f64]| {
            let pv = ParameterVector::new(p.to_vec()).unwrap();
            LossKind::BinaryCrossEntropy.value(forward(arch, &pv, x).unwrap(), y)
        };
        let mut p = w.to_vec();
        (0..p.len())
            .map(|i| {
                let orig = p[i];
                p[i] = orig + h;
                let up = loss(&p);
                p[i] = orig - h;
                let down = loss(&p);
                p[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn max_relative_deviation(analytic: &[f64], numeric: &[f64]) -> f64 {
        let scale = numeric.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / scale)
            .fold(0.0, f64::max)
    }

    #[test]
    fn ten_parameter_network_matches_finite_differences() {
        let arch = Architecture::new(1, vec![3], Activation::Tanh).unwrap();
        assert_eq!(arch.num_params(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = random_params(arch.num_params(), 1.0, &mut rng);
        let x = [0.8];
        let g = backward(&arch, &w, &x, 1.0, LossKind::BinaryCrossEntropy).unwrap();
        let fd = finite_difference(&arch, &w, &x, 1.0, 1e-5);
        assert!(max_relative_deviation(&g, &fd) <= 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn backward_matches_finite_differences(seed in any::<u64>(), y in 0u8..2, act in 0usize..3) {
            let activation = [Activation::Tanh, Activation::Sigmoid, Activation::Relu][act];
            let arch = Architecture::new(3, vec![4, 3], activation).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_params(arch.num_params(), 1.0, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = backward(&arch, &w, &x, f64::from(y), LossKind::BinaryCrossEntropy).unwrap();
            let fd = finite_difference(&arch, &w, &x, f64::from(y), 1e-5);
            prop_assert!(max_relative_deviation(&g, &fd) <= 1e-4);
        }

        #[test]
        fn output_stays_in_unit_interval(seed in any::<u64>(), scale in 0.1f64..200.0) {
            let arch = Architecture::default_for(6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_params(arch.num_params(), scale, &mut rng);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
            let p = forward(&arch, &w, &x).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn blocked_passes_agree_with_single_row_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for activation in [Activation::Relu, Activation::Tanh] {
            let mlp = Mlp::new(Architecture::new(7, vec![9, 5], activation).unwrap());
            let w = random_params(mlp.num_params(), 1.0, &mut rng);
            let rows = 150;
            let data: Vec<f64> = (0..rows * 7).map(|_| f64::from(rng.random_range(0u8..2))).collect();
            let xs = Features::new(7, data).unwrap();
            let mut blocked = vec![0.0; rows];
            mlp.predict_rows(&w, &xs, &mut blocked);
            let labels: Vec<f64> = (0..rows).map(|i| (i % 2) as f64).collect();
            let batch: Vec<Example<'_>> = xs.iter_rows().zip(&labels).map(|(x, &y)| Example { x, y }).collect();
            let mut g_block = vec![0.0; mlp.num_params()];
            let l_block = mlp.add_batch_loss_gradient(&w, &batch, 0.5, &mut g_block);
            let mut g_single = vec![0.0; mlp.num_params()];
            let mut l_single = 0.0;
            for (i, e) in batch.iter().enumerate() {
                assert!((blocked[i] - mlp.predict(&w, e.x)).abs() <= 1e-14);
                l_single += mlp.add_loss_gradient(&w, *e, 0.5, &mut g_single);
            }
            assert!((l_block - l_single).abs() <= 1e-10);
            assert!(max_relative_deviation(&g_block, &g_single) <= 1e-12);
        }
    }
}
