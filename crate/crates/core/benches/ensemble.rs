//! Sequential against rayon-parallel execution of the same work. Results are
//! identical either way; only wall time differs.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ionheat_core::ensemble::{run_ensemble, EnsembleSpec, Execution, RunOptions};
use ionheat_core::record::Model;
use ionheat_core::waiting::{mean_wait_curve, N_ZETA};
use ionheat_core::{NumericalControls, PhysParams};

const EXECUTIONS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn semi_ensemble(c: &mut Criterion) {
    let p = PhysParams::new(0.4, 1.0, 2.0).unwrap();
    let spec = EnsembleSpec::new(Model::Semi, p, NumericalControls::default(), 16, 50.0);
    let mut g = c.benchmark_group("semi_ensemble_16x50");
    for (name, exec) in EXECUTIONS {
        let opts = RunOptions {
            execution: exec,
            ..RunOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_ensemble(&spec, &opts).unwrap())
        });
    }
    g.finish();
}

fn quantum_ensemble(c: &mut Criterion) {
    let p = PhysParams::new(0.4, 1.0, 2.0).unwrap();
    let spec = EnsembleSpec::new(Model::Quantum, p, NumericalControls::default().with_n_max(96), 8, 2.0);
    let mut g = c.benchmark_group("quantum_ensemble_8x2");
    for (name, exec) in EXECUTIONS {
        let opts = RunOptions {
            execution: exec,
            ..RunOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_ensemble(&spec, &opts).unwrap())
        });
    }
    g.finish();
}

fn meanwait_grid(c: &mut Criterion) {
    let p = PhysParams::default();
    let grid: Vec<f64> = (0..16).map(|i| 0.1 * i as f64).collect();
    let mut g = c.benchmark_group("meanwait_16_amplitudes");
    for (name, exec) in EXECUTIONS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mean_wait_curve(&grid, &p, N_ZETA, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(10));
    targets = semi_ensemble, quantum_ensemble, meanwait_grid
}
criterion_main!(benches);
