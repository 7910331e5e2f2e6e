use std::time::Duration;

use cavi_core::analysis::{gcorr_empirical, EmpiricalOptions};
use cavi_core::harness::{run_sweep, ExperimentConfig, SweepConfig, SweepParam};
use cavi_core::models::{fixed_point, perturbed_init, ModelSpec};
use cavi_core::scheduler::run_randomized_ensemble;
use cavi_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(exec: Execution) -> &'static str {
    match exec {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn ensemble(c: &mut Criterion) {
    let model = ModelSpec::CompoundSymmetry { d: 5, rho: 0.2 };
    let qstar = fixed_point(&model).unwrap();
    let init = perturbed_init(&model, &qstar, 1.0).unwrap();
    let seeds: Vec<u64> = (0..1000).collect();
    let mut group = c.benchmark_group("randomized_ensemble");
    for exec in MODES {
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| run_randomized_ensemble(&model, &init, &qstar, &seeds, 30, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::from_json_str(r#"{"model": {"type": "discrete2d", "p": 0.5}, "max_iter": 2000}"#)
        .unwrap();
    cfg.sweep = Some(SweepConfig {
        params: vec![SweepParam::linspace("p", 0.02, 0.98, 200)],
        max_points: 10_000,
    });
    let mut group = c.benchmark_group("discrete_sweep");
    for exec in MODES {
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| run_sweep(&cfg, exec, None).unwrap())
        });
    }
    group.finish();
}

fn gcorr_search(c: &mut Criterion) {
    let model = ModelSpec::CompoundSymmetry { d: 4, rho: 0.2 };
    let qstar = fixed_point(&model).unwrap();
    let opts = EmpiricalOptions {
        budget: 4000,
        ..EmpiricalOptions::default()
    };
    let mut group = c.benchmark_group("gcorr_empirical");
    for exec in MODES {
        group.bench_function(BenchmarkId::from_parameter(label(exec)), |b| {
            b.iter(|| gcorr_empirical(&model, &qstar, &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn config() -> Criterion {
    Criterion::default()
        .sample_size(20)
        .measurement_time(Duration::from_secs(3))
        .warm_up_time(Duration::from_millis(500))
}

criterion_group! {
    name = benches;
    config = config();
    targets = ensemble, sweep, gcorr_search
}
criterion_main!(benches);
