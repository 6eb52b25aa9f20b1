use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use noisefed_core::adapters::{aggregate_stacked, GlobalModel};
use noisefed_core::noise_est::estimate_loo_pca;
use noisefed_core::orchestrator::{run_round, SimState};
use noisefed_core::task::{local_train, GaussianMixture, Split};
use noisefed_core::{AdapterPair, EstimationSource, Matrix, SimConfig, TaskConfig, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn uploads(n: usize, d_out: usize, d_in: usize, r: usize) -> Vec<AdapterPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| AdapterPair::new(gaussian(r, d_in, &mut rng), gaussian(d_out, r, &mut rng)).unwrap())
        .collect()
}

fn bench_estimation(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_loo_pca");
    for n in [6, 10, 20] {
        let ups = uploads(n, 256, 64, 8);
        g.bench_with_input(BenchmarkId::from_parameter(n), &ups, |b, ups| {
            b.iter(|| estimate_loo_pca(black_box(ups), EstimationSource::BOnly).unwrap())
        });
    }
    g.finish();
}

fn bench_aggregation(c: &mut Criterion) {
    let ups = uploads(10, 256, 64, 8);
    let w = WeightVector::uniform(10);
    c.bench_function("aggregate_stacked/10x256x64", |b| b.iter(|| aggregate_stacked(black_box(&ups), &w).unwrap()));
}

fn bench_local_train(c: &mut Criterion) {
    let task = TaskConfig::default();
    let mixture = GaussianMixture::new(task.d_in, task.n_classes, task.class_separation).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shard = mixture.sample_balanced(task.n_per_client, Split::Train, &mut rng);
    let model = GlobalModel::new(Matrix::zeros(task.d_out(), task.d_in)).unwrap();
    c.bench_function("local_train/default", |b| {
        b.iter(|| local_train(&model, black_box(&shard), &task, &mut ChaCha8Rng::seed_from_u64(3)).unwrap())
    });
}

fn bench_round(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let init = SimState::init(&cfg).unwrap();
    c.bench_function("run_round/default", |b| {
        b.iter_batched(|| init.clone(), |mut s| run_round(&mut s, &cfg).unwrap(), criterion::BatchSize::SmallInput)
    });
}

criterion_group!(benches, bench_estimation, bench_aggregation, bench_local_train, bench_round);
criterion_main!(benches);
