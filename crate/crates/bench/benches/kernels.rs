use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use protogs::{assign_tiles, kmeans_tile, render, render_backward, RenderOptions};
use protogs_bench::{noise_image, points, scene, vectors};

fn render_forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("render_forward");
    let opts = RenderOptions::default();
    for n in [200, 2000] {
        let (set, cam) = scene(n, 64, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| render(black_box(&set), &cam, &opts).unwrap())
        });
    }
    g.finish();
}

fn render_backward_pass(c: &mut Criterion) {
    let mut g = c.benchmark_group("render_backward");
    let opts = RenderOptions::default();
    for n in [200, 2000] {
        let (set, cam) = scene(n, 64, 1);
        let grad = noise_image(64, 64, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| render_backward(black_box(&set), &cam, &grad, &opts).unwrap())
        });
    }
    g.finish();
}

fn kmeans(c: &mut Criterion) {
    let mut g = c.benchmark_group("kmeans_tile");
    let d = 14;
    let weights = vec![1.0; d];
    for n in [64, 512] {
        let rows = vectors(n, d, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| kmeans_tile(black_box(&rows), d, n / 4, &weights, 7, None).unwrap())
        });
    }
    g.finish();
}

fn assignment(c: &mut Criterion) {
    let positions = points(20_000, 4);
    let anchors = points(500, 5);
    c.bench_function("assign_tiles/20000x500", |b| {
        b.iter(|| assign_tiles(black_box(&positions), &anchors).unwrap())
    });
}

criterion_group!(benches, render_forward, render_backward_pass, kmeans, assignment);
criterion_main!(benches);
