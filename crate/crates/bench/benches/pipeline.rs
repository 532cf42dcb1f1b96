use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dipfuse::gains::estimate_gains;
use dipfuse::net::{backward, forward, init_params, make_input, NetworkSpec, Tensor};
use dipfuse::{evaluate_all, Image};
use dipfuse_bench::textured;

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network");
    group.sample_size(10);
    for (channels, size) in [(1usize, 64usize), (10, 64)] {
        let spec = NetworkSpec::new(channels);
        let params = init_params::<f32>(&spec, 0).unwrap();
        let input = make_input::<f32>(1, size, size, channels, &spec).unwrap();
        let id = format!("{channels}ch_{size}px");
        group.bench_with_input(BenchmarkId::new("forward", &id), &input, |b, x| {
            b.iter(|| forward(&params, black_box(x), &spec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", &id), &input, |b, x| {
            b.iter(|| {
                backward(&params, black_box(x), &spec, |o| {
                    let g: Vec<f32> = o.data().iter().map(|v| v - 0.5).collect();
                    (0.0, Tensor::new(o.shape().to_vec(), g).unwrap())
                })
                .unwrap()
            })
        });
    }
    group.finish();
}

fn gains(c: &mut Criterion) {
    let (a, b) = (textured(128, 128, 0.0), textured(128, 128, 1.3));
    c.bench_function("gains/128px_window7", |bench| {
        bench.iter(|| estimate_gains(black_box(&a), black_box(&b), 7).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let (a, b) = (textured(128, 128, 0.0), textured(128, 128, 1.3));
    let f = Image::from_fn(128, 128, |x, y| 0.5 * (a.get(x, y) + b.get(x, y)));
    c.bench_function("metrics/evaluate_all_128px", |bench| {
        bench.iter(|| evaluate_all(black_box(&a), black_box(&b), black_box(&f)).unwrap())
    });
}

criterion_group!(benches, network, gains, metrics);
criterion_main!(benches);
