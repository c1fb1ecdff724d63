//! Tensor-product Gauss–Hermite quadrature for Gaussian expectations in a
//! handful of dimensions. It gives the smoothing checks a deterministic
//! route to `E_Δ[·]` that shares nothing with the Monte-Carlo sampler.

use crate::error::{Error, Result};

/// Nodes and weights for `E[g(τ)]`, `τ ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Largest dimension accepted by [`GaussHermite::expect`].
pub const MAX_DIM: usize = 4;

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 200 {
            return Err(Error::invalid("nodes", format!("need 1..=200 nodes, got {n}")));
        }
        let (x, w) = physicists_rule(n);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        Ok(Self {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / sqrt_pi).collect(),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[g(τ)]` for `τ ~ N(0, I_dim)` on the full tensor grid.
    pub fn expect(&self, dim: usize, mut g: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(
                "dim",
                format!("tensor quadrature supports 1..={MAX_DIM} dimensions, got {dim}"),
            ));
        }
        let n = self.nodes.len();
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        let mut total = 0.0;
        loop {
            let mut weight = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                point[k] = self.nodes[i];
                weight *= self.weights[i];
            }
            total += weight * g(&point);
            // odometer increment
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == dim {
                    return Ok(total);
                }
            }
        }
    }
}

/// Roots and weights of the physicists' Hermite polynomial `H_n`
/// (weight `e^{−x²}`), by Newton iteration on the orthonormal recurrence.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(−1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_are_exact() {
        for n in [1, 2, 5, 20, 64, 120] {
            let q = GaussHermite::new(n).unwrap();
            let m0: f64 = q.weights().iter().sum();
            assert!((m0 - 1.0).abs() < 1e-13, "n={n} m0={m0}");
            if n >= 2 {
                let m2 = q.expect(1, |t| t[0] * t[0]).unwrap();
                assert!((m2 - 1.0).abs() < 1e-12, "n={n}");
            }
            if n >= 3 {
                let m4 = q.expect(1, |t| t[0].powi(4)).unwrap();
                assert!((m4 - 3.0).abs() < 1e-11, "n={n}");
            }
        }
    }

    #[test]
    fn two_dimensional_gaussian_integral() {
        // E[cos(a·τ)] = exp(−‖a‖²/2)
        let q = GaussHermite::new(40).unwrap();
        let v = q.expect(2, |t| (0.7 * t[0] - 0.4 * t[1]).cos()).unwrap();
        assert!((v - (-(0.49 + 0.16) / 2.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn dimension_limit() {
        let q = GaussHermite::new(3).unwrap();
        assert!(q.expect(5, |_| 1.0).is_err());
        assert!(q.expect(0, |_| 1.0).is_err());
    }
}
