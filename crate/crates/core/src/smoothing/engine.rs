use rayon::prelude::*;

use crate::rng::CounterRng;

/// Samples per work unit. Chunk boundaries are fixed, so the reduction
/// order (and therefore every bit of the result) is independent of the
/// number of worker threads.
pub(crate) const CHUNK: usize = 512;

/// Running first and second moments of one Monte-Carlo output, stored
/// relative to the value of sample 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance; 0 when `count == 1`.
    pub variance: f64,
}

impl Moments {
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Evaluates `sample(Δ_j, workspace, out)` for `j = 0..samples`, where
/// `Δ_j = σ·τ_j` and `τ_j` is the standard normal vector addressed by
/// counter `j` in `noise`. Returns the moments of each of the `outputs`
/// values written to `out`.
pub(crate) fn monte_carlo<F>(samples: usize, dim: usize, sigma: f64, noise: &CounterRng, outputs: usize, sample: F) -> Vec<Moments>
where
    F: Fn(&[f64], &mut Vec<f64>, &mut [f64]) + Sync,
{
    assert!(samples >= 1);
    let draw = |j: usize, delta: &mut [f64]| {
        noise.standard_normal(j as u64, delta);
        for d in delta.iter_mut() {
            *d *= sigma;
        }
    };

    // Sample 0 fixes the shift; a constant integrand then yields exactly
    // its value with zero variance.
    let mut delta = vec![0.0; dim];
    let mut work = Vec::new();
    let mut shift = vec![0.0; outputs];
    draw(0, &mut delta);
    sample(&delta, &mut work, &mut shift);

    let chunks = (samples - 1).div_ceil(CHUNK);
    let partial: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = 1 + c * CHUNK;
            let end = (start + CHUNK).min(samples);
            let mut delta = vec![0.0; dim];
            let mut work = Vec::new();
            let mut vals = vec![0.0; outputs];
            let mut acc = vec![(0.0, 0.0); outputs];
            for j in start..end {
                draw(j, &mut delta);
                sample(&delta, &mut work, &mut vals);
                for ((s1, s2), (v, c0)) in acc.iter_mut().zip(vals.iter().zip(&shift)) {
                    let d = v - c0;
                    *s1 += d;
                    *s2 += d * d;
                }
            }
            acc
        })
        .collect();

    let mut total = vec![(0.0, 0.0); outputs];
    for chunk in &partial {
        for (t, p) in total.iter_mut().zip(chunk) {
            t.0 += p.0;
            t.1 += p.1;
        }
    }

    let n = samples as f64;
    total
        .iter()
        .zip(&shift)
        .map(|(&(s1, s2), &c0)| {
            let variance = if samples > 1 {
                ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            Moments {
                count: samples,
                mean: c0 + s1 / n,
                variance,
            }
        })
        .collect()
}
