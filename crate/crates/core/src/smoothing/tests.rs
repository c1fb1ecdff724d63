use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::model::toy::{ClampedAffine, Constant, SigmoidLinear, ThresholdLinear};
use crate::model::{Activation, Architecture, LossKind, Mlp};
use crate::rng::Stream;

fn noise(seed: u64) -> CounterRng {
    CounterRng::new(seed, Stream::Verify, &[])
}

fn pv(v: &[f64]) -> ParameterVector {
    ParameterVector::new(v.to_vec()).unwrap()
}

fn rows(cols: usize, v: &[f64]) -> Features {
    Features::new(cols, v.to_vec()).unwrap()
}

#[test]
fn constant_base_is_exact() {
    let m = Constant {
        value: 0.37,
        num_params: 5,
        input_dim: 2,
    };
    let sc = SmoothedClassifier::new(&m, ParameterVector::zeros(5), 0.8, 1000, noise(1)).unwrap();
    let v = sc.predict(&[1.0, -1.0]).unwrap();
    assert_eq!(v.value, 0.37);
    assert_eq!(v.error.variance, 0.0);
    assert_eq!(v.error.sample_count, 1000);
}

#[test]
fn threshold_linear_matches_phi_one() {
    let m = ThresholdLinear { dim: 2 };
    let sc = SmoothedClassifier::new(&m, pv(&[1.0, 0.0]), 1.0, 100_000, noise(2)).unwrap();
    let v = sc.predict(&[1.0, 0.0]).unwrap();
    assert!((v.value - 0.841_344_746).abs() <= 0.01, "{}", v.value);
    assert!(v.error.half_width(3.0) < 0.005);
}

#[test]
fn normal_cdf_reference_values() {
    assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-14);
    assert_abs_diff_eq!(normal_cdf(-1.96), 0.024_997_895_148_220_4, epsilon = 1e-14);
}

#[test]
fn sigmoid_linear_agrees_with_quadrature() {
    let m = SigmoidLinear { dim: 2 };
    let w = [0.7, -1.2];
    let x = [1.5, 0.4];
    let sigma = 0.5;
    let sc = SmoothedClassifier::new(&m, pv(&w), sigma, 20_000, noise(3)).unwrap();
    let v = sc.predict(&x).unwrap();
    let gh = quadrature::GaussHermite::new(40).unwrap();
    let exact = gh
        .expect(2, |t| m.predict(&[w[0] + sigma * t[0], w[1] + sigma * t[1]], &x))
        .unwrap();
    let hw = v.error.half_width(3.0);
    assert!((v.value - exact).abs() <= 3.0 * hw, "{} vs {exact} (hw {hw})", v.value);
}

#[test]
fn affine_base_is_translation_invariant_in_expectation() {
    let m = ClampedAffine {
        dim: 3,
        offset: 0.5,
        slope: 0.01,
    };
    let w = [1.0, -2.0, 0.5];
    let x = [0.3, 0.1, -0.4];
    let sc = SmoothedClassifier::new(&m, pv(&w), 0.2, 50_000, noise(4)).unwrap();
    let v = sc.predict(&x).unwrap();
    let base = m.predict(&w, &x);
    assert!((v.value - base).abs() <= 4.0 * v.error.half_width(1.0) + 1e-12);
}

#[test]
fn mc_error_bound_examples() {
    let (hw, conf) = mc_error_bound(100_000, 3.0, 1.0).unwrap();
    assert_abs_diff_eq!(hw, 0.009_486_832_980_505_138, epsilon = 1e-12);
    assert!((conf - 0.9973).abs() < 1e-4);
    let (hw, conf) = mc_error_bound(10_000, 1.96, 0.25).unwrap();
    assert_abs_diff_eq!(hw, 0.0049, epsilon = 1e-12);
    // independent check of the confidence against Φ
    assert_abs_diff_eq!(conf, 2.0 * normal_cdf(1.96) - 1.0, epsilon = 1e-12);
    assert!((conf - 0.95).abs() < 1e-3);
    let (hw4, _) = mc_error_bound(400_000, 3.0, 1.0).unwrap();
    assert_abs_diff_eq!(hw4, 0.009_486_832_980_505_138 / 2.0, epsilon = 1e-15);
    assert!(mc_error_bound(0, 3.0, 1.0).is_err());
    assert!(mc_error_bound(10, 0.0, 1.0).is_err());
    assert!(mc_error_bound(10, 3.0, 1.5).is_err());
}

#[test]
fn rejects_bad_sigma_and_samples() {
    let m = ThresholdLinear { dim: 1 };
    for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
        assert!(SmoothedClassifier::new(&m, pv(&[1.0]), s, 10, noise(0)).is_err());
    }
    assert!(SmoothedClassifier::new(&m, pv(&[1.0]), 1.0, 0, noise(0)).is_err());
    assert!(SmoothedClassifier::new(&m, pv(&[1.0, 2.0]), 1.0, 10, noise(0)).is_err());
}

#[test]
fn dedup_predictions_match_full() {
    let m = SigmoidLinear { dim: 2 };
    let sc = SmoothedClassifier::new(&m, pv(&[0.3, -0.1]), 0.4, 300, noise(5)).unwrap();
    let xs = rows(2, &[1.0, 2.0, 0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 3.0, 3.0]);
    assert_eq!(sc.predict_rows(&xs).unwrap(), sc.predict_rows_dedup(&xs).unwrap());
}

fn tiny_mlp() -> Mlp {
    Mlp::new(Architecture::new(2, vec![3], Activation::Tanh).unwrap())
}

#[test]
fn zero_sigma_offsets_give_plain_gradient() {
    let mlp = tiny_mlp();
    let p = pv(&(0..mlp.num_params()).map(|i| 0.1 * i as f64 - 0.6).collect::<Vec<_>>());
    let x = [0.5, -1.0];
    let batch = [Example { x: &x, y: 1.0 }];
    let (g, loss) = smooth_gradient_with_offsets(&mlp, &p, &[vec![0.0; p.len()]], &batch).unwrap();
    let plain = crate::model::backward(mlp.arch(), &p, &x, 1.0, LossKind::BinaryCrossEntropy).unwrap();
    assert_eq!(g.as_slice(), plain.as_slice());
    let pred = crate::model::forward(mlp.arch(), &p, &x).unwrap();
    assert_abs_diff_eq!(loss, -pred.ln(), epsilon = 1e-12);
}

#[test]
fn smoothed_gradient_matches_common_noise_finite_differences() {
    let mlp = tiny_mlp();
    let m = mlp.num_params();
    let p = pv(&(0..m).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect::<Vec<_>>());
    let xs = [[0.4, -0.3], [1.2, 0.8], [-0.5, 0.9]];
    let ys = [1.0, 0.0, 1.0];
    let batch: Vec<Example<'_>> = xs.iter().zip(ys).map(|(x, y)| Example { x, y }).collect();
    let sigma = 0.3;
    let n = noise(6);
    let samples = 8;
    let (g, _) = smooth_gradient(&mlp, &p, sigma, samples, &n, &batch).unwrap();

    let offsets: Vec<Vec<f64>> = (0..samples as u64)
        .map(|j| {
            let mut d = vec![0.0; m];
            n.standard_normal(j, &mut d);
            d.iter().map(|v| v * sigma).collect()
        })
        .collect();
    let objective = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for d in &offsets {
            let shifted: Vec<f64> = w.iter().zip(d).map(|(a, b)| a + b).collect();
            let sp = ParameterVector::new(shifted).unwrap();
            for (x, &y) in xs.iter().zip(&ys) {
                let pr = crate::model::forward(mlp.arch(), &sp, x).unwrap();
                total += LossKind::BinaryCrossEntropy.value(pr, y);
            }
        }
        total / (offsets.len() * xs.len()) as f64
    };
    let h = 1e-5;
    for k in 0..m {
        let mut up = p.as_slice().to_vec();
        let mut down = up.clone();
        up[k] += h;
        down[k] -= h;
        let fd = (objective(&up) - objective(&down)) / (2.0 * h);
        let rel = (g[k] - fd).abs() / fd.abs().max(1e-3);
        assert!(rel <= 1e-3, "param {k}: {} vs {fd}", g[k]);
    }
}

#[test]
fn constant_base_has_zero_gradient() {
    let m = Constant {
        value: 0.6,
        num_params: 4,
        input_dim: 1,
    };
    let batch = [Example { x: &[1.0], y: 0.0 }];
    let (g, loss) = smooth_gradient(&m, &ParameterVector::zeros(4), 1.0, 16, &noise(7), &batch).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
    assert_abs_diff_eq!(loss, -(0.4f64).ln(), epsilon = 1e-12);
}

#[test]
fn gradient_rejects_empty_batch() {
    let m = SigmoidLinear { dim: 1 };
    assert!(smooth_gradient(&m, &pv(&[0.0]), 1.0, 4, &noise(0), &[]).is_err());
}

#[test]
fn lipschitz_identical_params_have_zero_difference() {
    let m = SigmoidLinear { dim: 2 };
    let a = SmoothedClassifier::new(&m, pv(&[0.2, 0.4]), 0.5, 2000, noise(8)).unwrap();
    let b = a.with_params(pv(&[0.2, 0.4])).unwrap();
    let r = check_lipschitz(&a, &b, &rows(2, &[1.0, 1.0, -2.0, 0.5])).unwrap();
    assert_eq!(r.max_difference, 0.0);
    assert_eq!(r.bound, 0.0);
    assert!(r.passed());
}

#[test]
fn lipschitz_rejects_mismatched_sigma_or_noise() {
    let m = SigmoidLinear { dim: 1 };
    let a = SmoothedClassifier::new(&m, pv(&[0.0]), 0.5, 100, noise(1)).unwrap();
    let b = SmoothedClassifier::new(&m, pv(&[1.0]), 0.6, 100, noise(1)).unwrap();
    let c = SmoothedClassifier::new(&m, pv(&[1.0]), 0.5, 100, noise(2)).unwrap();
    let xs = rows(1, &[1.0]);
    assert!(check_lipschitz(&a, &b, &xs).is_err());
    assert!(check_lipschitz(&a, &c, &xs).is_err());
}

#[test]
fn threshold_linear_closed_form_respects_bound() {
    // Φ is (1/√(2π))-Lipschitz, so the closed form must satisfy the bound
    // for unit-norm inputs exactly.
    let sigma = 0.3;
    let x = [0.6, 0.8];
    let mut rng = CounterRng::new(11, Stream::Verify, &[]).at(0);
    use rand::Rng;
    for _ in 0..500 {
        let w1: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |w: &[f64]| normal_cdf((w[0] * x[0] + w[1] * x[1]) / sigma);
        let dist = ((w1[0] - w2[0]).powi(2) + (w1[1] - w2[1]).powi(2)).sqrt();
        assert!((f(&w1) - f(&w2)).abs() <= lipschitz_bound(dist, sigma) + 1e-15);
    }
}

#[test]
fn sigma_convergence_for_smooth_base() {
    let m = SigmoidLinear { dim: 2 };
    let xs = rows(2, &[1.0, 0.5, -0.3, 2.0, 0.8, -0.8]);
    let r = check_sigma_convergence(&m, &pv(&[0.5, -0.2]), &xs, &[1.0, 0.3, 0.1, 0.03], 4000, &noise(9), 1e-3).unwrap();
    assert!(r.passed(), "{r:?}");
    assert!(r.rows[0].mean_gap > r.rows[3].mean_gap);
}

#[test]
fn sigma_convergence_validates_sequence() {
    let m = SigmoidLinear { dim: 1 };
    let xs = rows(1, &[1.0]);
    assert!(check_sigma_convergence(&m, &pv(&[0.0]), &xs, &[0.1, 0.5], 10, &noise(0), 1.0).is_err());
    assert!(check_sigma_convergence(&m, &pv(&[0.0]), &xs, &[], 10, &noise(0), 1.0).is_err());
}

#[test]
fn frechet_residual_vanishes_at_zero_direction() {
    let m = SigmoidLinear { dim: 2 };
    let xs = rows(2, &[1.0, -1.0]);
    let integ = Integrator::MonteCarlo {
        samples: 500,
        noise: noise(10),
    };
    assert_eq!(frechet_residual(&m, &pv(&[0.1, 0.2]), 0.5, &[0.0, 0.0], &xs, &integ).unwrap(), 0.0);
}

#[test]
fn frechet_ratios_are_quadratic_under_quadrature() {
    let m = SigmoidLinear { dim: 2 };
    let xs = rows(2, &[1.0, -0.5, 0.3, 1.4]);
    let integ = Integrator::Quadrature { nodes: 40 };
    let r = check_frechet_derivative(&m, &pv(&[0.4, -0.3]), 0.5, &[0.08, 0.06], 3, &xs, &integ).unwrap();
    assert!(r.passed, "{r:?}");
    for q in &r.ratios {
        assert!((3.0..=5.0).contains(q), "{q}");
    }
}

#[test]
fn frechet_rejects_zero_direction() {
    let m = SigmoidLinear { dim: 1 };
    let integ = Integrator::Quadrature { nodes: 10 };
    assert!(check_frechet_derivative(&m, &pv(&[0.0]), 0.5, &[0.0], 3, &rows(1, &[1.0]), &integ).is_err());
}

#[test]
fn directional_derivative_of_affine_base() {
    let m = ClampedAffine {
        dim: 2,
        offset: 0.5,
        slope: 0.02,
    };
    let w = pv(&[0.3, -0.6]);
    let x = [1.0, 2.0];
    let delta = [0.5, -0.25];
    let expected = m.directional_derivative(&x, &delta);
    let quad = smoothed_directional_derivative(&m, &w, 0.4, &delta, &rows(2, &x), &Integrator::Quadrature { nodes: 20 })
        .unwrap();
    assert_abs_diff_eq!(quad[0].value, expected, epsilon = 1e-12);
    let mc = smoothed_directional_derivative(
        &m,
        &w,
        0.4,
        &delta,
        &rows(2, &x),
        &Integrator::MonteCarlo {
            samples: 50_000,
            noise: noise(12),
        },
    )
    .unwrap();
    assert!((mc[0].value - expected).abs() <= mc[0].error.half_width(4.0));
}

#[test]
fn coverage_on_small_replication_count() {
    let r = mc_coverage(&pv(&[0.3, -0.2]), &[1.0, 1.0], 0.5, 100_000, 20, &noise(13), 3.0, 0.01).unwrap();
    assert!(r.covered >= 18, "{r:?}");
    assert_eq!(r.within_abs_tolerance, 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smoothed_values_stay_in_unit_interval(
        w in prop::collection::vec(-3.0f64..3.0, 2),
        x in prop::collection::vec(-3.0f64..3.0, 2),
        sigma in 0.01f64..2.0,
        seed in any::<u64>(),
    ) {
        let m = SigmoidLinear { dim: 2 };
        let sc = SmoothedClassifier::new(&m, pv(&w), sigma, 64, noise(seed)).unwrap();
        let v = sc.predict(&x).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.value));
        prop_assert!(v.error.variance >= 0.0);
    }

    #[test]
    fn predictions_are_reproducible(seed in any::<u64>(), sigma in 0.05f64..1.0) {
        let m = ThresholdLinear { dim: 3 };
        let p = pv(&[0.2, -0.1, 0.4]);
        let a = SmoothedClassifier::new(&m, p.clone(), sigma, 700, noise(seed)).unwrap();
        let b = SmoothedClassifier::new(&m, p, sigma, 700, noise(seed)).unwrap();
        prop_assert_eq!(a.predict(&[1.0, 1.0, 1.0]).unwrap(), b.predict(&[1.0, 1.0, 1.0]).unwrap());
    }

    #[test]
    fn paired_lipschitz_holds_for_threshold_base(
        w1 in prop::collection::vec(-1.0f64..1.0, 2),
        w2 in prop::collection::vec(-1.0f64..1.0, 2),
        seed in any::<u64>(),
    ) {
        let m = ThresholdLinear { dim: 2 };
        let a = SmoothedClassifier::new(&m, pv(&w1), 0.5, 2000, noise(seed)).unwrap();
        let b = a.with_params(pv(&w2)).unwrap();
        let r = check_lipschitz(&a, &b, &rows(2, &[0.6, 0.8, -1.0, 0.0])).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
    }
}
