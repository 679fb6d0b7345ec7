use std::sync::Arc;

use bvx_core::lens::bootstrap_ci_with;
use bvx_core::rng::stream;
use bvx_core::{
    bias_variance, bootstrap_ci, classification_risk_check, total_variance_split, Dataset, Mode, PredictionTensor,
    Provenance, TaskSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn sinusoid_test_set(points: usize, seed: u64) -> Dataset {
    bvx_core::generate(&TaskSpec::default(), points, seed).unwrap()
}

fn random_tensor(n_s: usize, n_o: usize, points: usize, outputs: usize, seed: u64) -> PredictionTensor {
    let mut rng = stream(seed, "tensor", &[]);
    let values = (0..n_s * n_o * points * outputs)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    PredictionTensor::new(n_s, n_o, points, outputs, values, Provenance::default()).unwrap()
}

/// Softmax-normalized random tensor plus one-hot labels.
fn probability_tensor(n_s: usize, n_o: usize, points: usize, k: usize, seed: u64) -> (PredictionTensor, Dataset) {
    let mut rng = stream(seed, "prob-tensor", &[]);
    let mut values = Vec::new();
    for _ in 0..n_s * n_o * points {
        let logits: Vec<f64> = (0..k).map(|_| 3.0 * rng.random::<f64>()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        values.extend(logits.iter().map(|l| l.exp() / z));
    }
    let t = PredictionTensor::new(n_s, n_o, points, k, values, Provenance::default()).unwrap();
    let mut y = DMatrix::zeros(points, k);
    for i in 0..points {
        y[(i, rng.random_range(0..k))] = 1.0;
    }
    let task = TaskSpec::GaussianClusters {
        means: (0..k).map(|c| vec![c as f64]).collect(),
        std: 1.0,
    };
    let x = DMatrix::from_fn(points, 1, |i, _| i as f64);
    (t, Dataset::new(x, y, Arc::new(task)).unwrap())
}

fn grid() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..6, 2usize..6, 2usize..12, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_variance_identity_is_exact((n_s, n_o, points, seed) in grid(), k in 1usize..3) {
        let t = random_tensor(n_s, n_o, points, k, seed);
        let s = total_variance_split(&t).unwrap();
        prop_assert!((s.var_sampling + s.var_optimization - s.total).abs() <= 1e-12 * s.total.max(1.0));
        prop_assert!(s.var_sampling >= 0.0 && s.var_optimization >= 0.0);
    }

    #[test]
    fn four_term_risk_identity_is_exact((n_s, n_o, points, seed) in grid()) {
        let t = random_tensor(n_s, n_o, points, 1, seed);
        let test = sinusoid_test_set(points, seed);
        for mode in [Mode::OracleMean, Mode::LabelAsMean] {
            let r = bias_variance(&t, &test, mode).unwrap();
            let sum = r.e_bias + r.e_variance + r.e_noise + r.cross_term;
            prop_assert!((sum - r.risk).abs() <= 1e-12 * r.risk.max(1.0));
        }
        // With labels as their own mean the noise and cross terms vanish.
        let r = bias_variance(&t, &test, Mode::LabelAsMean).unwrap();
        prop_assert_eq!(r.e_noise, 0.0);
        prop_assert_eq!(r.cross_term, 0.0);
    }

    #[test]
    fn estimators_are_symmetric_under_grid_permutations((n_s, n_o, points, seed) in grid()) {
        let t = random_tensor(n_s, n_o, points, 1, seed);
        let test = sinusoid_test_set(points, seed);
        let mut rng = stream(seed, "perm", &[]);
        let mut sp: Vec<usize> = (0..n_s).collect();
        let mut op: Vec<usize> = (0..n_o).collect();
        sp.shuffle(&mut rng);
        op.shuffle(&mut rng);
        let p = t.permuted(&sp, &op);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        let (a, b) = (total_variance_split(&t).unwrap(), total_variance_split(&p).unwrap());
        prop_assert!(close(a.var_sampling, b.var_sampling));
        prop_assert!(close(a.var_optimization, b.var_optimization));
        prop_assert!(close(a.total, b.total));
        let (a, b) = (
            bias_variance(&t, &test, Mode::OracleMean).unwrap(),
            bias_variance(&p, &test, Mode::OracleMean).unwrap(),
        );
        prop_assert!(close(a.e_bias, b.e_bias));
        prop_assert!(close(a.e_variance, b.e_variance));
        prop_assert!(close(a.e_noise, b.e_noise));
        prop_assert!(close(a.risk, b.risk));
    }

    #[test]
    fn classification_bound_always_holds((n_s, n_o, points, seed) in grid(), k in 2usize..5) {
        let (t, test) = probability_tensor(n_s, n_o, points, k, seed);
        let r = classification_risk_check(&t, &test).unwrap();
        prop_assert!(r.bound_ok, "{} > 4 * {}", r.r_classif, r.r_reg);
        for (c, g) in r.classif_pointwise.iter().zip(&r.reg_pointwise) {
            prop_assert!(*c <= 4.0 * g + 1e-12);
        }
    }

    #[test]
    fn intervals_contain_constant_statistic(n in 2usize..30, seed in any::<u64>(), v in -5.0f64..5.0) {
        let ci = bootstrap_ci(&vec![v; n], 0.99, 200, seed).unwrap();
        let tol = 1e-12 * v.abs().max(1.0);
        prop_assert!((ci.low - v).abs() <= tol && (ci.high - v).abs() <= tol, "{:?}", (ci.low, ci.high));
    }
}

/// Percentile-interval coverage of the mean of n Gaussian draws at level 0.99.
#[test]
fn bootstrap_coverage_study() {
    let (trials, n) = (500, 100);
    let mut covered = 0;
    for trial in 0..trials {
        let mut rng = stream(42, "coverage", &[trial]);
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ci = bootstrap_ci_with(n, 0.99, 1000, trial, |idx| {
            idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
        })
        .unwrap();
        if ci.low <= 0.0 && 0.0 <= ci.high {
            covered += 1;
        }
    }
    let coverage = covered as f64 / trials as f64;
    assert!((0.97..=1.0).contains(&coverage), "coverage {coverage}");
}
