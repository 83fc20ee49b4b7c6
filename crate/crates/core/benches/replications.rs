use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vacle::calibration::{calibrate_ridge, CalibrationKey};
use vacle::estimators::{Method, Sigma2Mode};
use vacle::harness::{run_experiment, EstimatorEntry, ExperimentConfig, GridPoint};
use vacle::spectra::{Family, ModelSpec, PopulationModel};
use vacle::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn calibration(c: &mut Criterion) {
    let mut group = c.benchmark_group("calibrate_ridge");
    group.sample_size(10);
    let key = CalibrationKey { family: Family::Population, p: 100, n: 200, t: None, reps: 64, seed: 1 };
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| calibrate_ridge(&key, exec).unwrap())
        });
    }
    group.finish();
}

fn harness(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = ExperimentConfig {
            model_id: "bench".into(),
            model: ModelSpec::SpikedPopulation(PopulationModel {
                spikes: vec![8.0, 5.0, 3.0],
                sigma2: 1.0,
                p: 0,
                n: 0,
            }),
            grid: vec![GridPoint { p: 80, n: Some(160), t: None }],
            estimators: [Method::Vacle, Method::Tvacle, Method::Py, Method::Lwy]
                .into_iter()
                .map(EstimatorEntry::new)
                .collect(),
            reps: 64,
            seed: 2,
            sigma2: Sigma2Mode::Known(1.0),
            calibration_reps: 32,
            execution: exec,
            keep_traces: false,
            timing: false,
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment(&cfg, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, calibration, harness);
criterion_main!(benches);
