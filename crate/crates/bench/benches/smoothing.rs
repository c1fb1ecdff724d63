use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fairsmooth_bench::{binary_rows, default_network, labels};
use fairsmooth_core::smoothing::smooth_gradient;
use fairsmooth_core::{BaseClassifier, CounterRng, Example, SmoothedClassifier, Stream};

fn base_predict(c: &mut Criterion) {
    let (mlp, params) = default_network();
    let xs = binary_rows(256);
    let mut out = vec![0.0; xs.rows()];
    let mut g = c.benchmark_group("base_predict");
    g.throughput(Throughput::Elements(xs.rows() as u64));
    g.bench_function("256_rows", |b| b.iter(|| mlp.predict_rows(black_box(&params), &xs, &mut out)));
    g.finish();
}

fn smoothed_predict(c: &mut Criterion) {
    let (mlp, params) = default_network();
    let mut g = c.benchmark_group("smoothed_predict");
    g.sample_size(20);
    for rows in [1usize, 64] {
        let xs = binary_rows(rows);
        let s = SmoothedClassifier::new(&mlp, params.clone(), 0.25, 1_000, CounterRng::new(0, Stream::McEval, &[])).unwrap();
        g.throughput(Throughput::Elements((rows * 1_000) as u64));
        g.bench_with_input(BenchmarkId::new("1000_samples", rows), &xs, |b, xs| {
            b.iter(|| s.predict_rows(black_box(xs)).unwrap())
        });
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let (mlp, params) = default_network();
    let xs = binary_rows(128);
    let ys = labels(128);
    let batch: Vec<Example<'_>> = xs.iter_rows().zip(&ys).map(|(x, &y)| Example { x, y }).collect();
    let noise = CounterRng::new(0, Stream::McTrain, &[0, 0]);
    let mut g = c.benchmark_group("smooth_gradient");
    for samples in [1usize, 16] {
        g.bench_with_input(BenchmarkId::new("batch_128", samples), &samples, |b, &n| {
            b.iter(|| smooth_gradient(&mlp, &params, 0.25, n, &noise, black_box(&batch)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, base_predict, smoothed_predict, gradient);
criterion_main!(benches);
