use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fairsmooth_bench::default_network;
use fairsmooth_core::data::synthetic;
use fairsmooth_core::experiment::{train_model, ModelSpec};
use fairsmooth_core::train::{certify, fair_step};
use fairsmooth_core::{ParameterVector, TrainingConfig};

fn coupled_update(c: &mut Criterion) {
    let (_, params) = default_network();
    let ws = vec![params.clone(), params.clone(), params];
    let grads: Vec<ParameterVector> = ws.iter().map(|w| ParameterVector::zeros(w.len())).collect();
    c.bench_function("fair_step_3_groups", |b| {
        b.iter(|| fair_step(black_box(&ws), &grads, 0.05, 0.5).unwrap())
    });
    c.bench_function("certify_3_groups", |b| b.iter(|| certify(black_box(&ws), 0.25).unwrap()));
}

fn synthetic_epoch(c: &mut Criterion) {
    let ds = synthetic::two_group(500, 0).unwrap();
    let spec = ModelSpec {
        hidden: vec![16],
        ..ModelSpec::default()
    };
    let cfg = TrainingConfig {
        epochs: 1,
        ..TrainingConfig::default()
    };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("synthetic_one_epoch", |b| {
        b.iter(|| train_model(black_box(&ds), &spec, &cfg, None, |_, _| Ok(())).unwrap())
    });
    g.finish();
}

criterion_group!(benches, coupled_update, synthetic_epoch);
criterion_main!(benches);
