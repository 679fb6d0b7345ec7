use std::path::Path;

use bvx_core::data::idx::{encode_images, encode_labels, IdxImages};
use bvx_core::{bootstrap_replicates, generate, load_idx, true_mean, Error, TaskSpec};
use proptest::prelude::*;

fn sinusoid(sigma: f64) -> TaskSpec {
    TaskSpec::Sinusoid {
        amplitude: 1.0,
        frequency: 1.0,
        noise_sigma: sigma,
    }
}

fn assert_one_hot(rows: &nalgebra::DMatrix<f64>) {
    for i in 0..rows.nrows() {
        let r = rows.row(i);
        assert_eq!(r.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(r.iter().filter(|&&v| v == 0.0).count(), r.len() - 1);
    }
}

#[test]
fn sinusoid_residuals_have_the_configured_noise() {
    let sigma = 0.1;
    let m = 100_000;
    let d = generate(&sinusoid(sigma), m, 2).unwrap();
    let res: Vec<f64> = (0..m)
        .map(|i| d.targets[(i, 0)] - true_mean(d.task.as_ref(), &d.input_row(i)).unwrap()[0])
        .collect();
    let mean = res.iter().sum::<f64>() / m as f64;
    let var = res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    // Gaussian residuals: se(mean) = σ/√m, se(s²) = σ²√(2/(m−1)).
    assert!(mean.abs() < 3.0 * sigma / (m as f64).sqrt(), "mean {mean}");
    let se_var = sigma * sigma * (2.0 / (m - 1) as f64).sqrt();
    assert!((var - sigma * sigma).abs() < 3.0 * se_var, "variance {var}");
}

#[test]
fn bootstrap_marginal_frequency() {
    let m = 20;
    let n_rep = 5000;
    let base = generate(&sinusoid(0.1), m, 1).unwrap();
    let reps = bootstrap_replicates(&base, n_rep, 9).unwrap();
    let mut counts = vec![0usize; m];
    for r in &reps.replicates {
        for &i in r {
            counts[i] += 1;
        }
    }
    // Each draw hits index i with p = 1/m; there are m·n_rep draws.
    let draws = (m * n_rep) as f64;
    let p = 1.0 / m as f64;
    let se = (p * (1.0 - p) / draws).sqrt();
    for c in counts {
        assert!((c as f64 / draws - p).abs() < 3.0 * se, "frequency {}", c as f64 / draws);
    }
}

#[test]
fn bootstrap_distinct_fraction_near_one_minus_inverse_e() {
    let m = 1000;
    let base = generate(&sinusoid(0.1), m, 1).unwrap();
    let reps = bootstrap_replicates(&base, 50, 4).unwrap();
    let mut fractions = Vec::new();
    for r in &reps.replicates {
        let mut seen = vec![false; m];
        r.iter().for_each(|&i| seen[i] = true);
        fractions.push(seen.iter().filter(|&&s| s).count() as f64 / m as f64);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    // 1 − (1 − 1/m)^m at m = 1000.
    let expected = 1.0 - (1.0 - 1.0 / m as f64).powi(m as i32);
    assert!((mean - expected).abs() < 0.005, "{mean} vs {expected}");
    assert!((expected - 0.632).abs() < 0.001);
}

#[test]
fn cluster_labels_are_one_hot_and_posteriors_are_distributions() {
    let task = TaskSpec::GaussianClusters {
        means: vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![-1.0, 2.0]],
        std: 0.8,
    };
    let d = generate(&task, 300, 6).unwrap();
    assert_one_hot(&d.targets);
    let means = d.true_means().unwrap();
    for i in 0..d.len() {
        let row = means.row(i);
        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

fn write_idx(dir: &Path, count: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let images = IdxImages {
        count,
        rows: 2,
        cols: 3,
        pixels: (0..count * 6).map(|v| (v * 37 % 256) as u8).collect(),
    };
    let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
    let (ip, lp) = (dir.join("images.idx"), dir.join("labels.idx"));
    std::fs::write(&ip, encode_images(&images)).unwrap();
    std::fs::write(&lp, encode_labels(&labels)).unwrap();
    (ip, lp)
}

#[test]
fn idx_subset_is_scaled_and_one_hot() {
    let tmp = tempfile::tempdir().unwrap();
    let (ip, lp) = write_idx(tmp.path(), 25);
    let d = load_idx(&ip, &lp, 12, 3).unwrap();
    assert_eq!((d.len(), d.input_dim(), d.output_dim()), (12, 6, 10));
    assert!(d.inputs.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_one_hot(&d.targets);
    assert!(!d.true_mean_available);
    assert_eq!(load_idx(&ip, &lp, 12, 3).unwrap().inputs, d.inputs);

    // A row's pixels identify the source image; its label is index % 10.
    for i in 0..d.len() {
        let first = (d.inputs[(i, 0)] * 255.0).round() as usize;
        let src = (0..25).find(|&s| s * 6 * 37 % 256 == first).unwrap();
        assert_eq!(d.class_labels()[i], src % 10);
    }
}

#[test]
fn idx_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let (ip, lp) = write_idx(tmp.path(), 5);
    assert!(matches!(load_idx(&ip, &lp, 6, 0), Err(Error::Config(_))));
    assert!(matches!(load_idx(&lp, &lp, 2, 0), Err(Error::Format { .. })));
    let short = tmp.path().join("short.idx");
    let bytes = std::fs::read(&ip).unwrap();
    std::fs::write(&short, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(load_idx(&short, &lp, 2, 0), Err(Error::Format { .. })));
    let missing = tmp.path().join("missing.idx");
    assert!(matches!(load_idx(&missing, &lp, 2, 0), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), m in 1usize..50) {
        let t = sinusoid(0.3);
        let a = generate(&t, m, seed).unwrap();
        let b = generate(&t, m, seed).unwrap();
        prop_assert_eq!(&a.inputs, &b.inputs);
        prop_assert_eq!(&a.targets, &b.targets);
        prop_assert!(a.inputs.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn replicates_index_the_base(seed in any::<u64>(), m in 1usize..40, n in 1usize..6) {
        let base = generate(&sinusoid(0.1), m, 0).unwrap();
        let reps = bootstrap_replicates(&base, n, seed).unwrap();
        prop_assert_eq!(reps.len(), n);
        for r in &reps.replicates {
            prop_assert_eq!(r.len(), m);
            prop_assert!(r.iter().all(|&i| i < m));
        }
        prop_assert_eq!(reps.replicates, bootstrap_replicates(&base, n, seed).unwrap().replicates);
    }

    #[test]
    fn cluster_datasets_are_one_hot(seed in any::<u64>(), k in 2usize..5) {
        let means = (0..k).map(|c| vec![c as f64, -(c as f64)]).collect();
        let d = generate(&TaskSpec::GaussianClusters { means, std: 1.0 }, 30, seed).unwrap();
        assert_one_hot(&d.targets);
    }
}
