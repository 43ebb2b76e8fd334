use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use condssl::clustering::fit_gmm;
use condssl::contrastive::loss_and_gradient;
use condssl::sampling::{epoch_schedule, BatchSpec, SamplerMode, TilePool};
use condssl::survival::{brier_score, c_index, cox_fit, CoxFitOptions};
use condssl_bench::{encoder_fixture, gaussian_rows, survival_records, tiles};

fn info_nce(c: &mut Criterion) {
    let mut group = c.benchmark_group("info_nce_gradient");
    group.sample_size(20);
    for queue in [256, 1024] {
        let (state, views) = encoder_fixture(8, 128, queue, 1);
        group.bench_with_input(BenchmarkId::from_parameter(queue), &queue, |b, _| {
            b.iter(|| loss_and_gradient(&state, &views).unwrap())
        });
    }
    group.finish();
}

fn gmm(c: &mut Criterion) {
    let data = gaussian_rows(2000, 32, 2);
    let mut group = c.benchmark_group("gmm_fit");
    group.sample_size(10);
    for k in [10, 50] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| fit_gmm(&data, k, 1e-4, 30, 3).unwrap())
        });
    }
    group.finish();
}

fn cox(c: &mut Criterion) {
    let mut group = c.benchmark_group("cox_fit");
    for d in [10, 100] {
        let recs = survival_records(400, d, 4);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| cox_fit(&recs, 0.1, CoxFitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0..50) as f64).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.6).collect();
    let risks: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let surv: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    c.bench_function("c_index_20k", |b| b.iter(|| c_index(&times, &events, &risks).unwrap()));
    c.bench_function("brier_20k", |b| b.iter(|| brier_score(&times, &events, &surv, 25.0).unwrap()));
}

fn sampling(c: &mut Criterion) {
    let pool = TilePool::new(&tiles(400, 64));
    let mut group = c.benchmark_group("epoch_schedule");
    for (name, mode) in [("random", SamplerMode::Random), ("cond4", SamplerMode::Conditional(4))] {
        let spec = BatchSpec::new(128, mode).unwrap();
        group.bench_function(name, |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            b.iter(|| epoch_schedule(&pool, &spec, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, info_nce, gmm, cox, metrics, sampling);
criterion_main!(benches);
