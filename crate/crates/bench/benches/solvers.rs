use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tvreg_core::pde::{assemble_system, linear_solve};
use tvreg_bench::{interval, noise, square};
use tvreg_core::{
    build_grid, dual_projection, solve_regularized, taut_string_1d, DomainSpec, Parameterization, SolverConfig,
};

fn taut_string(c: &mut Criterion) {
    let mut g = c.benchmark_group("taut_string");
    for n in [256, 1024, 4096] {
        let f = noise(&interval(n), 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| taut_string_1d(black_box(f), 0.05).unwrap())
        });
    }
    g.finish();
}

// Around a second per solve on smooth data, hence the small sample.
fn dual(c: &mut Criterion) {
    let mut g = c.benchmark_group("dual_projection");
    g.sample_size(10);
    let f = noise(&interval(256), 1.0);
    g.bench_function("256", |b| b.iter(|| dual_projection(black_box(&f), 0.05, 1e-8, 200_000).unwrap()));
    g.finish();
}

fn linear(c: &mut Criterion) {
    let mut g = c.benchmark_group("linear_solve");
    for n in [64, 128] {
        let f = noise(&square(n), 10.0);
        let sys = assemble_system(&f, &f, &SolverConfig::new(1e-2, Parameterization::Lambda(1.0))).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &sys, |b, sys| {
            b.iter(|| linear_solve(sys, &f, 1e-8, 10_000, None).unwrap())
        });
    }
    g.finish();
}

fn regularized(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_regularized");
    g.sample_size(10);
    for (name, spec) in [
        ("square64", DomainSpec::rectangle(64, 64, 1.0, 1.0)),
        ("lshape64", DomainSpec::l_shape(64, 1.0)),
    ] {
        let f = noise(&build_grid(&spec).unwrap(), 20.0);
        let cfg = SolverConfig::new(1e-2, Parameterization::Lambda(1.0));
        g.bench_with_input(BenchmarkId::from_parameter(name), &f, |b, f| {
            b.iter(|| solve_regularized(black_box(f), &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, taut_string, dual, linear, regularized);
criterion_main!(benches);
