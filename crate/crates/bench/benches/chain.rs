use std::hint::black_box;

use chainq::analytic::network_metrics;
use chainq::optimizer::{solve_allocation, AllocationProblem};
use chainq::simulator::{simulate, Horizon, SimConfig};
use chainq::traffic::solve_traffic;
use chainq_bench::{cims, tandem};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn traffic(c: &mut Criterion) {
    let mut group = c.benchmark_group("traffic");
    for n in [6, 50, 200] {
        let spec = tandem(n, 500.0, 50.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &spec, |b, spec| {
            b.iter(|| solve_traffic(black_box(spec)).unwrap())
        });
    }
    group.finish();
}

fn analytic(c: &mut Criterion) {
    let spec = cims(50.0);
    c.bench_function("network_metrics/cims", |b| b.iter(|| network_metrics(black_box(&spec)).unwrap()));
}

fn allocation(c: &mut Criterion) {
    let p = AllocationProblem::unit(vec![10.0, 20.0, 30.0, 5.0, 7.0, 9.0], 200.0);
    c.bench_function("solve_allocation/6", |b| b.iter(|| solve_allocation(black_box(&p)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let cfg = SimConfig::new(cims(50.0), Horizon::Arrivals(20_000)).with_replications(1);
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("cims/20k", |b| b.iter(|| simulate(black_box(&cfg)).unwrap()));
    group.finish();
}

criterion_group!(benches, traffic, analytic, allocation, simulation);
criterion_main!(benches);
