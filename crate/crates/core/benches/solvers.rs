//! Single-worker versus full-pool timings of the parallel paths.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use thz_hybrid::channel::generate_channel;
use thz_hybrid::harness::{run_experiment, ExperimentSpec, Scheme, SweepAxis};
use thz_hybrid::par::{current_threads, with_threads};
use thz_hybrid::solver::{ds::solve_ds, fc::solve_fc, SolverOptions};
use thz_hybrid::{Structure, SystemConfig};

fn modes() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", current_threads())]
}

fn solvers(c: &mut Criterion) {
    let opts = SolverOptions { rel_tol: 0.0, max_iters: 2, ..Default::default() };
    let base = SystemConfig { n_t: 64, subcarriers: 32, ..SystemConfig::desk() };
    let fc = generate_channel(&base.clone().with_structure(Structure::FullyConnected)).unwrap();
    let ds = generate_channel(&base.with_structure(Structure::DynamicSubarray)).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for (mode, threads) in modes() {
        group.bench_function(BenchmarkId::new("fc", mode), |b| {
            b.iter(|| with_threads(threads, || solve_fc(black_box(&fc), &opts).unwrap()))
        });
        group.bench_function(BenchmarkId::new("ds", mode), |b| {
            b.iter(|| with_threads(threads, || solve_ds(black_box(&ds), &opts).unwrap()))
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let spec = ExperimentSpec::new(
        SystemConfig::desk(),
        SweepAxis::SnrDb,
        vec![0.0, 10.0],
        vec![Scheme::AlterOptFC, Scheme::AlterOptPC, Scheme::DSWB],
        4,
    );
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (mode, threads) in modes() {
        group.bench_function(mode, |b| b.iter(|| with_threads(threads, || run_experiment(black_box(&spec)).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, solvers, sweep);
criterion_main!(benches);
