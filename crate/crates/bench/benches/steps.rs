use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use photon_filter_bench::two_gaussians;
use photon_filter_core::{
    build_oracle, integrate_master, simulate_trajectory, Filter, MasterMethod, MeasurementScheme, Oracle,
    SimulationConfig,
};

const DT: f64 = 1e-3;

fn single_steps(c: &mut Criterion) {
    let params = two_gaussians();
    let filter = Filter::new(params).unwrap();
    let oracle = Oracle::new(&params).unwrap();
    let fs = filter.init(2.5);
    let os = build_oracle(&params, 2.5);

    c.bench_function("filter hh step", |b| {
        b.iter(|| filter.hh_step(black_box(&fs), DT, 0.01, -0.02).unwrap())
    });
    c.bench_function("filter hp step", |b| {
        b.iter(|| filter.hp_step(black_box(&fs), DT, 0.01, false).unwrap())
    });
    c.bench_function("oracle hh step", |b| {
        b.iter(|| oracle.hh_step(black_box(&os), DT, 0.01, -0.02).unwrap())
    });
}

fn whole_runs(c: &mut Criterion) {
    let cfg = SimulationConfig {
        n_traj: 1,
        ..SimulationConfig::new(two_gaussians(), MeasurementScheme::HomodyneHomodyne)
    };
    let mut group = c.benchmark_group("runs");
    group.sample_size(10);
    group.bench_function("master rk4", |b| b.iter(|| integrate_master(black_box(&cfg), MasterMethod::Rk4).unwrap()));
    group.bench_function("hh trajectory", |b| b.iter(|| simulate_trajectory(black_box(&cfg), 0).unwrap()));
    group.finish();
}

criterion_group!(benches, single_steps, whole_runs);
criterion_main!(benches);
