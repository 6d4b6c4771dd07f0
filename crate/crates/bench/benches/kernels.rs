use contmeas_bench::fixture;
use contmeas_core::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for dim in [10, 40] {
        let f = fixture(dim);
        let g = LindbladGenerator::new(&f.model, &f.ops.h).unwrap();
        group.bench_with_input(BenchmarkId::new("generator", dim), &dim, |b, _| {
            b.iter(|| g.apply(black_box(f.rho0.matrix())))
        });
        group.bench_with_input(BenchmarkId::new("double_commutator", dim), &dim, |b, _| {
            b.iter(|| rhs_double_commutator(&f.model, &f.ops.h, black_box(&f.rho0)).unwrap())
        });
    }
    group.finish();
}

fn evolve_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve_100_steps");
    group.sample_size(20);
    for dim in [20, 40] {
        let f = fixture(dim);
        let opts = EvolveOptions::new(0.1, 1e-3).with_stride(100);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| evolve(&f.rho0, &f.model, &f.ops.h, &opts).unwrap())
        });
    }
    group.finish();
}

fn trajectory_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory_1000_steps");
    group.sample_size(20);
    for dim in [24, 40] {
        let f = fixture(dim);
        let opts = TrajectoryOptions::new(1.0, 1e-3).with_stride(1000);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |b, _| {
            b.iter(|| run_trajectory(&f.rho0, &f.model, &f.ops.h, &opts, 1).unwrap())
        });
    }
    group.finish();
}

fn steady(c: &mut Criterion) {
    let f = fixture(16);
    let mut group = c.benchmark_group("steady_state");
    group.sample_size(10);
    group.bench_function("dim16", |b| b.iter(|| steady_state(&f.model, &f.ops.h).unwrap()));
    group.finish();
}

criterion_group!(benches, rhs, evolve_steps, trajectory_steps, steady);
criterion_main!(benches);
