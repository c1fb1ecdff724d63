//! Row-blocked forward and backward passes for [`Mlp`].
//!
//! Weights are transposed once per call so each layer becomes a sequence
//! of contiguous `z_r += a_ri · W[:, i]` updates. Zero activations (binary
//! inputs, inactive ReLUs) are skipped.

use super::mlp::Mlp;
use super::{sigmoid, Activation, Example, LayerShape, LossKind};

const BLOCK: usize = 64;

pub(super) struct BlockBuffers {
    /// Transposed weight matrices (`inputs × outputs`) per layer.
    wt: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    input: Vec<f64>,
}

impl BlockBuffers {
    pub(super) fn new(layers: &[LayerShape], params: &[f64]) -> Self {
        let wt = layers
            .iter()
            .map(|l| {
                let w = &params[l.weight_range()];
                let mut t = vec![0.0; l.inputs * l.outputs];
                for o in 0..l.outputs {
                    for i in 0..l.inputs {
                        t[i * l.outputs + o] = w[o * l.inputs + i];
                    }
                }
                t
            })
            .collect();
        let per_layer = |l: &LayerShape| vec![0.0; BLOCK * l.outputs];
        Self {
            wt,
            z: layers.iter().map(per_layer).collect(),
            a: layers.iter().map(per_layer).collect(),
            delta: layers.iter().map(per_layer).collect(),
            input: Vec::with_capacity(BLOCK * layers[0].inputs),
        }
    }
}

#[inline]
fn dense(input: &[f64], rows: usize, inputs: usize, wt: &[f64], bias: &[f64], z: &mut [f64]) {
    let outputs = bias.len();
    for r in 0..rows {
        let zr = &mut z[r * outputs..(r + 1) * outputs];
        zr.copy_from_slice(bias);
        for (i, &a) in input[r * inputs..(r + 1) * inputs].iter().enumerate() {
            if a != 0.0 {
                for (zz, &w) in zr.iter_mut().zip(&wt[i * outputs..(i + 1) * outputs]) {
                    *zz += a * w;
                }
            }
        }
    }
}

impl Mlp {
    /// Forward pass over `rows` contiguous inputs held in `buf.input`.
    fn forward_block(&self, params: &[f64], rows: usize, buf: &mut BlockBuffers) {
        let layers = self.layer_shapes();
        let last = layers.len() - 1;
        let act = self.arch().activation;
        for (li, shape) in layers.iter().enumerate() {
            let (before, rest) = buf.a.split_at_mut(li);
            let input: &[f64] = if li == 0 { &buf.input } else { &before[li - 1] };
            let z = &mut buf.z[li];
            dense(input, rows, shape.inputs, &buf.wt[li], &params[shape.bias_range()], z);
            let n = rows * shape.outputs;
            let a = &mut rest[0];
            if li == last {
                for (ai, &zi) in a[..n].iter_mut().zip(&z[..n]) {
                    *ai = sigmoid(zi);
                }
            } else {
                apply_activation(act, &z[..n], &mut a[..n]);
            }
        }
    }

    pub(super) fn predict_block_rows(&self, params: &[f64], data: &[f64], out: &mut [f64]) {
        let layers = self.layer_shapes();
        let cols = layers[0].inputs;
        let last = layers.len() - 1;
        let mut buf = BlockBuffers::new(layers, params);
        for (block, o) in data.chunks(BLOCK * cols).zip(out.chunks_mut(BLOCK)) {
            buf.input.clear();
            buf.input.extend_from_slice(block);
            self.forward_block(params, o.len(), &mut buf);
            o.copy_from_slice(&buf.a[last][..o.len()]);
        }
    }

    pub(super) fn batch_gradient(&self, params: &[f64], batch: &[Example<'_>], scale: f64, loss: LossKind, grad: &mut [f64]) -> f64 {
        let layers = self.layer_shapes();
        let last = layers.len() - 1;
        let act = self.arch().activation;
        let mut buf = BlockBuffers::new(layers, params);
        let mut gwt: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.inputs * l.outputs]).collect();
        let mut total = 0.0;
        for block in batch.chunks(BLOCK) {
            let rows = block.len();
            buf.input.clear();
            for e in block {
                buf.input.extend_from_slice(e.x);
            }
            self.forward_block(params, rows, &mut buf);
            for (r, e) in block.iter().enumerate() {
                let (l, g) = loss.value_and_logit_grad(buf.a[last][r], e.y);
                total += l;
                buf.delta[last][r] = g * scale;
            }
            for li in (0..=last).rev() {
                let shape = layers[li];
                let (outs, ins) = (shape.outputs, shape.inputs);
                let (lower, upper) = buf.delta.split_at_mut(li);
                let delta = &upper[0];
                let input: &[f64] = if li == 0 { &buf.input } else { &buf.a[li - 1] };
                let gb = &mut grad[shape.bias_range()];
                let gw = &mut gwt[li];
                for r in 0..rows {
                    let dr = &delta[r * outs..(r + 1) * outs];
                    for (g, &d) in gb.iter_mut().zip(dr) {
                        *g += d;
                    }
                    for (i, &a) in input[r * ins..(r + 1) * ins].iter().enumerate() {
                        if a != 0.0 {
                            for (g, &d) in gw[i * outs..(i + 1) * outs].iter_mut().zip(dr) {
                                *g += a * d;
                            }
                        }
                    }
                }
                if li > 0 {
                    let prev = &mut lower[li - 1];
                    let wt = &buf.wt[li];
                    let (z, a) = (&buf.z[li - 1], &buf.a[li - 1]);
                    for r in 0..rows {
                        let dr = &delta[r * outs..(r + 1) * outs];
                        for i in 0..ins {
                            let k = r * ins + i;
                            let dact = act.derivative(z[k], a[k]);
                            prev[k] = if dact == 0.0 {
                                0.0
                            } else {
                                let w = &wt[i * outs..(i + 1) * outs];
                                dact * w.iter().zip(dr).map(|(x, y)| x * y).sum::<f64>()
                            };
                        }
                    }
                }
            }
        }
        for (shape, gw) in layers.iter().zip(&gwt) {
            let dst = &mut grad[shape.weight_range()];
            for o in 0..shape.outputs {
                for i in 0..shape.inputs {
                    dst[o * shape.inputs + i] += gw[i * shape.outputs + o];
                }
            }
        }
        total
    }
}

#[inline]
fn apply_activation(act: Activation, z: &[f64], a: &mut [f64]) {
    match act {
        Activation::Relu => {
            for (ai, &zi) in a.iter_mut().zip(z) {
                *ai = zi.max(0.0);
            }
        }
        _ => {
            for (ai, &zi) in a.iter_mut().zip(z) {
                *ai = act.apply(zi);
            }
        }
    }
}
