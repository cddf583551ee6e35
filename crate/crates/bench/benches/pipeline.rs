use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use perspcam::rasterizer::{gaussian_smooth, objective, rasterize, DEFAULT_SIGMA_PX};
use perspcam::solver::{solve_camera, CameraSolveConfig};
use perspcam_bench::{posed_mesh, target, truth};

fn bench_rasterize(c: &mut Criterion) {
    let mesh = posed_mesh();
    let mut group = c.benchmark_group("rasterize");
    for size in [128u32, 256, 512] {
        let p = truth();
        let cam = p.camera(size, size).unwrap().with_focal(p.f_px * size as f64 / 256.0);
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, _| {
            b.iter(|| rasterize(black_box(&mesh), &cam, &p.translation()).unwrap())
        });
    }
    group.finish();
}

fn bench_smooth(c: &mut Criterion) {
    let mask = target(&posed_mesh(), 256);
    c.bench_function("gaussian_smooth/256", |b| b.iter(|| gaussian_smooth(black_box(&mask), DEFAULT_SIGMA_PX).unwrap()));
}

fn bench_objective(c: &mut Criterion) {
    let mesh = posed_mesh();
    let mask = target(&mesh, 256);
    let p = truth();
    c.bench_function("objective/256", |b| b.iter(|| objective(black_box(&p), &mesh, &mask, DEFAULT_SIGMA_PX)));
}

fn bench_solve(c: &mut Criterion) {
    let mesh = posed_mesh();
    let mask = target(&mesh, 256);
    let cfg = CameraSolveConfig::default();
    let mut group = c.benchmark_group("solve_camera");
    group.sample_size(10);
    group.bench_function("256", |b| b.iter(|| solve_camera(black_box(&mesh), &mask, truth().tz, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_rasterize, bench_smooth, bench_objective, bench_solve);
criterion_main!(benches);
