//! Benchmarks for the pipeline's hot paths: Gram computation, the SMO
//! solver, kernel PCA, kernel fusion, and one deep-network training step.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use omkl_bench::{randn, signed_labels};
use omkl_core::deep::{build, DeepMklConfig, FusionMode, RunMode};
use omkl_core::fusion::{fuse_fixed, semkl_optimize, simplemkl_optimize, statis_fuse, MklConfig};
use omkl_core::kernel::{compute_gram, KernelSpec};
use omkl_core::kpca::{kpca_fit, DEFAULT_EIG_FLOOR};
use omkl_core::svm::smo_solve;
use std::hint::black_box;

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    for &n in &[100usize, 300] {
        let x = randn(1, n, 50);
        group.bench_with_input(BenchmarkId::new("rbf", n), &x, |b, x| {
            b.iter(|| compute_gram(black_box(x), KernelSpec::Rbf { sigma: 0.01 }, "v").unwrap())
        });
    }
    group.finish();
}

fn bench_smo(c: &mut Criterion) {
    let mut group = c.benchmark_group("smo");
    for &n in &[100usize, 300] {
        let x = randn(2, n, 10);
        let gram = compute_gram(&x, KernelSpec::Rbf { sigma: 0.05 }, "v").unwrap();
        let y = signed_labels(n);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| smo_solve(black_box(&gram.values), &y, 5.0, 1e-3).unwrap())
        });
    }
    group.finish();
}

fn bench_kpca(c: &mut Criterion) {
    let mut group = c.benchmark_group("kpca_fit");
    group.sample_size(20);
    for &n in &[100usize, 300] {
        let x = randn(3, n, 30);
        let gram = compute_gram(&x, KernelSpec::Rbf { sigma: 0.02 }, "v").unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| kpca_fit(black_box(&gram), 10, DEFAULT_EIG_FLOOR).unwrap())
        });
    }
    group.finish();
}

fn bench_fusion(c: &mut Criterion) {
    let n = 100;
    let kernels: Vec<_> = (0..3)
        .map(|m| {
            compute_gram(&randn(10 + m, n, 20), KernelSpec::Rbf { sigma: 0.03 }, "v").unwrap()
        })
        .collect();
    let y = signed_labels(n);
    let config = MklConfig::default();
    let mut group = c.benchmark_group("fusion");
    group.sample_size(20);
    group.bench_function("naive", |b| {
        b.iter(|| fuse_fixed(black_box(&kernels), None).unwrap())
    });
    group.bench_function("statis", |b| {
        b.iter(|| statis_fuse(black_box(&kernels), true).unwrap())
    });
    group.bench_function("simplemkl", |b| {
        b.iter(|| simplemkl_optimize(black_box(&kernels), &y, 5.0, &config).unwrap())
    });
    group.bench_function("semkl", |b| {
        b.iter(|| semkl_optimize(black_box(&kernels), &y, 5.0, &config).unwrap())
    });
    group.finish();
}

fn bench_deep_step(c: &mut Criterion) {
    let dims = [10usize, 10, 10];
    let mut config = DeepMklConfig::defaults(vec![32, 16], 16, 2);
    config.fusion = FusionMode::WeightedSum;
    config.dropout_rate = 0.3;
    let mut model = build(config, &dims, 2).unwrap();
    let views: Vec<_> = dims.iter().enumerate().map(|(m, &d)| randn(20 + m as u64, 32, d)).collect();
    let labels: Vec<usize> = (0..32).map(|i| i % 2).collect();
    let mut rng = rand::SeedableRng::seed_from_u64(0);
    c.bench_function("deep_train_batch", |b| {
        b.iter(|| {
            model
                .loss_and_gradients(black_box(&views), &labels, RunMode::Train, Some(&mut rng))
                .unwrap()
        })
    });
}

criterion_group!(benches, bench_gram, bench_smo, bench_kpca, bench_fusion, bench_deep_step);
criterion_main!(benches);
