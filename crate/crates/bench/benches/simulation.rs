use criterion::{criterion_group, criterion_main, Criterion};
use mjn_bench::jitter_instance;
use mjn_core::{estimate_overflow, SimConfig, WalkModel};
use std::hint::black_box;

fn bench_overflow(c: &mut Criterion) {
    let model = WalkModel::jackson(&jitter_instance()).unwrap();
    let plain = SimConfig::new(1, vec![4, 8], 20_000);
    let split = SimConfig::new(1, vec![4, 8, 12, 16], 640).with_splitting(64);
    let mut g = c.benchmark_group("overflow");
    g.sample_size(10);
    g.bench_function("plain", |b| b.iter(|| estimate_overflow(&model, black_box(&plain)).unwrap()));
    g.bench_function("splitting", |b| b.iter(|| estimate_overflow(&model, black_box(&split)).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_overflow);
criterion_main!(benches);
