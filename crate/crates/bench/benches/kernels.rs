use std::hint::black_box;

use bvx_bench::{random_tensor, sinusoid};
use bvx_core::linear::{variance_over, variance_under};
use bvx_core::net::{init, loss_and_gradient, train};
use bvx_core::{bias_variance, bootstrap_ci, total_variance_split, Head, InitSpec, LinearFixedDesign, Mode, TrainConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

fn gradients(c: &mut Criterion) {
    let data = sinusoid(80, 1);
    let mut g = c.benchmark_group("loss_and_gradient");
    for width in [5, 100, 1000] {
        let model = init(width, 1, 1, Head::Linear, &InitSpec { seed: 2 }).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(width), &model, |b, m| {
            b.iter(|| loss_and_gradient(black_box(m), &data))
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let data = sinusoid(80, 1);
    let model = init(100, 1, 1, Head::Linear, &InitSpec { seed: 2 }).unwrap();
    let cfg = TrainConfig::batch_gd(0.01, 100);
    c.bench_function("train/width100_100epochs", |b| {
        b.iter(|| train(model.clone(), &data, &cfg, 3).unwrap())
    });
}

fn linear_oracles(c: &mut Criterion) {
    let mut g = c.benchmark_group("linear_oracle");
    let under = LinearFixedDesign::from_teacher(&[0.5; 10], 0.3, 50, 1).unwrap();
    let x = DVector::from_element(10, 0.3);
    g.bench_function("under_n10_m50", |b| b.iter(|| variance_under(&under, black_box(&x)).unwrap()));
    for n in [16, 64, 256] {
        let over = LinearFixedDesign::from_teacher(&vec![1.0; n], 0.3, 4, 1).unwrap();
        let x = DVector::from_element(n, 0.1);
        g.bench_with_input(BenchmarkId::new("over_m4", n), &over, |b, d| {
            b.iter(|| variance_over(d, black_box(&x)).unwrap())
        });
    }
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let tensor = random_tensor(10, 10, 500, 4);
    let test = sinusoid(500, 5);
    let per_point: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
    let mut g = c.benchmark_group("estimators");
    g.bench_function("total_variance_split", |b| b.iter(|| total_variance_split(black_box(&tensor)).unwrap()));
    g.bench_function("bias_variance", |b| {
        b.iter(|| bias_variance(black_box(&tensor), &test, Mode::OracleMean).unwrap())
    });
    g.bench_function("bootstrap_ci_1000", |b| {
        b.iter(|| bootstrap_ci(black_box(&per_point), 0.99, 1000, 6).unwrap())
    });
    g.finish();
}

criterion_group!(benches, gradients, training, linear_oracles, estimators);
criterion_main!(benches);
