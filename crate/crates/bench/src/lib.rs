//! Fixtures shared by the benchmarks.

use bvx_core::rng::stream;
use bvx_core::{generate, Dataset, PredictionTensor, Provenance, TaskSpec};
use rand::Rng;

/// Default sinusoid task, `m` points.
pub fn sinusoid(m: usize, seed: u64) -> Dataset {
    generate(&TaskSpec::default(), m, seed).expect("valid default task")
}

/// Uniform(-1, 1) predictions for an `n_s` x `n_o` grid over `points` test
/// points with one output.
pub fn random_tensor(n_s: usize, n_o: usize, points: usize, seed: u64) -> PredictionTensor {
    let mut rng = stream(seed, "bench-tensor", &[]);
    let values = (0..n_s * n_o * points).map(|_| rng.random_range(-1.0..1.0)).collect();
    PredictionTensor::new(n_s, n_o, points, 1, values, Provenance::default()).expect("consistent shape")
}
