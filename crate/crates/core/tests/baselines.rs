use vacle::estimators::{Method, Sigma2Mode};
use vacle::harness::{run_experiment, EstimatorEntry, ExperimentConfig, GridPoint};
use vacle::spectra::{FisherModel, ModelSpec, NoiseCovariance};
use vacle::Execution;

// WY on strong Fisher spikes at small dimension is known to miss often:
// about 0.37 correct, so allow ±0.12 around it at 200 replications.
#[test]
fn wy_small_fisher_correct_rate() {
    let cfg = ExperimentConfig {
        model_id: "fisher-strong".into(),
        model: ModelSpec::SpikedFisher(FisherModel {
            alpha: vec![10.0, 5.0, 5.0],
            noise: NoiseCovariance::default(),
            sigma2: 1.0,
            p: 0,
            n: 0,
            t: 0,
        }),
        grid: vec![GridPoint { p: 50, n: Some(250), t: Some(100) }],
        estimators: vec![EstimatorEntry::new(Method::Wy)],
        reps: 200,
        seed: 17,
        sigma2: Sigma2Mode::Known(1.0),
        calibration_reps: 100,
        execution: Execution::Parallel,
        keep_traces: false,
        timing: false,
    };
    let run = run_experiment(&cfg, None).unwrap();
    assert!(run.failure.is_none());
    let r = &run.reports[0];
    assert_eq!(r.true_q, 3);
    let correct = 1.0 - r.misest_rate;
    assert!((0.25..=0.49).contains(&correct), "WY correct-rate {correct}");
}
