use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lsing::objective::{loss_gradient, nll};
use lsing::precision::omega_row;
use lsing::quadmap::ConditionalMap;
use lsing::training::{init_component, TrainConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(rows: usize, d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    Array2::from_shape_simple_fn((rows, d), || rng.random_range(-2.0..2.0))
}

fn config(width: usize, depth: usize) -> TrainConfig {
    TrainConfig {
        hidden: vec![width; depth],
        ..Default::default()
    }
}

fn bench_component(c: &mut Criterion) {
    let d = 10;
    let x = batch(256, d);
    let mut group = c.benchmark_group("component");
    for (width, depth) in [(32, 2), (64, 3)] {
        let map = init_component(0, d, &config(width, depth)).unwrap();
        let id = format!("{width}x{depth}");
        group.bench_with_input(BenchmarkId::new("nll_256", &id), &map, |b, m| {
            b.iter(|| nll(m, black_box(x.view())).unwrap())
        });
        for lambda in [0.0, 0.01] {
            group.bench_with_input(BenchmarkId::new(format!("gradient_256_lambda_{lambda}"), &id), &map, |b, m| {
                b.iter(|| loss_gradient(m, black_box(x.view()), lambda).unwrap())
            });
        }
        group.bench_with_input(BenchmarkId::new("bundle", &id), &map, |b, m| {
            b.iter(|| m.bundle(black_box(x.row(0).as_slice().unwrap()), true).unwrap())
        });
    }
    group.finish();
}

fn bench_omega_row(c: &mut Criterion) {
    let x = batch(1000, 10);
    let map = init_component(3, 10, &config(32, 2)).unwrap();
    c.bench_function("omega_row_1000x10", |b| b.iter(|| omega_row(&map, black_box(x.view())).unwrap()));
}

criterion_group!(benches, bench_component, bench_omega_row);
criterion_main!(benches);
