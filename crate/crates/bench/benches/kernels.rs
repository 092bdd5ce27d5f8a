use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use milkstream::attention::{
    milk_beta_row, mocha_beta_row, monotonic_alpha_row, monotonic_alpha_row_sequential, AttentionKind,
    WaitKSchedule,
};
use milkstream::latency::{differentiable_average_lagging, DelayVector};
use milkstream::model::{greedy_simultaneous_decode, train_step, wait_k_decode};
use milkstream::numerics::{SeededRng, DIVIDE_EPS};
use milkstream_bench::{attention_row, batch, delays, model, pairs};

fn attention_rows(c: &mut Criterion) {
    let mut group = c.benchmark_group("alpha_row");
    for n in [16, 64, 256] {
        let (p, prev, _) = attention_row(n, 1);
        group.bench_with_input(BenchmarkId::new("closed_form", n), &n, |b, _| {
            b.iter(|| monotonic_alpha_row(black_box(&p), black_box(&prev), DIVIDE_EPS))
        });
        group.bench_with_input(BenchmarkId::new("recurrence", n), &n, |b, _| {
            b.iter(|| monotonic_alpha_row_sequential(black_box(&p), black_box(&prev)))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("beta_row");
    for n in [16, 64, 256] {
        let (_, alpha, u) = attention_row(n, 2);
        group.bench_with_input(BenchmarkId::new("milk", n), &n, |b, _| {
            b.iter(|| milk_beta_row(black_box(&alpha), black_box(&u)))
        });
        group.bench_with_input(BenchmarkId::new("mocha_cs4", n), &n, |b, _| {
            b.iter(|| mocha_beta_row(black_box(&alpha), black_box(&u), 4))
        });
    }
    group.finish();
}

fn latency(c: &mut Criterion) {
    let mut group = c.benchmark_group("dal");
    for n in [16, 256] {
        let d = DelayVector::new(delays(n, 3), n).expect("valid delays");
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| differentiable_average_lagging(black_box(&d)))
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step_batch8");
    group.sample_size(10);
    let b8 = batch(8);
    for kind in [AttentionKind::Soft, AttentionKind::Milk, AttentionKind::Mocha { chunk_size: 2 }] {
        let m = model(kind);
        group.bench_function(kind.name(), |b| {
            b.iter(|| train_step(&m, black_box(&b8), 0.2, &mut SeededRng::new(0)))
        });
    }
    group.finish();
}

fn decoding(c: &mut Criterion) {
    let mut group = c.benchmark_group("decode_sentence");
    let source = pairs(1).remove(0).source;
    let milk = model(AttentionKind::Milk);
    group.bench_function("milk_greedy", |b| {
        b.iter(|| greedy_simultaneous_decode(&milk, black_box(&source), None))
    });
    let schedule = WaitKSchedule::new(3, 1.0).expect("valid schedule");
    group.bench_function("wait_3", |b| {
        b.iter(|| wait_k_decode(&milk, black_box(&source), schedule, None))
    });
    group.finish();
}

criterion_group!(benches, attention_rows, latency, training, decoding);
criterion_main!(benches);
