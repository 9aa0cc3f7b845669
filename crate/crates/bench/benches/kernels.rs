use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypstab_bench::{coupling, quasilinear_system, variable_speed_system, Fixture};
use hypstab_core::feedback::Sampler;
use hypstab_core::lyapunov::lyapunov_value;
use hypstab_core::solver::step;
use hypstab_core::{synthesize_linear, DelayTable};

fn synthesis(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesize_linear");
    for (k, m) in [(1, 3), (3, 3), (4, 6), (8, 8)] {
        let b = coupling(k, m);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{k}x{m}")), &b, |bench, b| {
            bench.iter(|| synthesize_linear(black_box(b)).unwrap())
        });
    }
    group.finish();
}

fn delay_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("delay_table");
    let sys = variable_speed_system();
    for nx in [101, 401] {
        group.bench_with_input(BenchmarkId::new("variable_speed", nx), &nx, |bench, &nx| {
            bench.iter(|| DelayTable::new(black_box(&sys), nx))
        });
    }
    group.finish();
}

fn upwind_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("upwind_step");
    for nx in [201, 801] {
        let f = Fixture::three_state(nx);
        let dt = 0.9 / (nx - 1) as f64 / f.sys.max_base_speed();
        group.bench_with_input(BenchmarkId::new("three_state", nx), &f, |bench, f| {
            bench.iter_batched_ref(
                || f.state.clone(),
                |state| step(state, &f.sys, &f.law, &mut Sampler::Fixed, dt, 0.9).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    let sys = quasilinear_system();
    let state = hypstab_core::suite::quasilinear_data(&sys).sample(201);
    let law = hypstab_core::FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 201)).unwrap();
    group.bench_function("quasilinear/201", |bench| {
        bench.iter_batched_ref(
            || state.clone(),
            |s| step(s, &sys, &law, &mut Sampler::Fixed, 2e-3, 0.9).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov_value");
    for nx in [201, 801] {
        let f = Fixture::three_state(nx);
        group.bench_with_input(BenchmarkId::new("three_state", nx), &f, |bench, f| {
            bench.iter(|| lyapunov_value(black_box(&f.state), &f.weights, &f.law, &f.delays, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, synthesis, delay_table, upwind_step, lyapunov);
criterion_main!(benches);
