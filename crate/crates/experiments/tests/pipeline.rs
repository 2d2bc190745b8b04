use ftc_experiments::config::{MonteCarloSpec, SequenceSpec};
use ftc_experiments::runner::paired_difference;
use ftc_experiments::{preset, run_experiment, sweep, ExperimentConfig, SweepAxis};

fn small() -> ExperimentConfig {
    let mut c = preset("fig4b").unwrap();
    c.problem.m = 5;
    c.problem.n = 10;
    c.optimizer.iterations = 200;
    c
}

#[test]
fn mismatched_agent_counts_are_rejected() {
    let mut c = small();
    c.series[1].topology.k = 4;
    let e = run_experiment(&c).unwrap_err();
    assert_eq!(e.kind(), "validation");
}

#[test]
fn zero_runs_are_rejected() {
    let mut c = small();
    c.monte_carlo = MonteCarloSpec { runs: 0, seed_base: 0 };
    assert!(run_experiment(&c).is_err());
}

#[test]
fn wrong_initial_point_length_is_rejected() {
    let mut c = small();
    c.optimizer.w0 = Some(vec![0.0; 3]);
    assert_eq!(run_experiment(&c).unwrap_err().kind(), "validation");
}

#[test]
fn empty_sweep_is_an_error() {
    assert!(sweep(&small(), SweepAxis::Mu, &[]).is_err());
}

#[test]
fn tau_sweep_flags_non_integer_values() {
    let r = sweep(&small(), SweepAxis::Tau, &[2.0, 2.5]).unwrap();
    assert!(r.results[0].is_ok());
    assert!(r.results[1].is_err());
    assert!(r.summary_csv().contains("tau must be a positive integer"));
}

#[test]
fn series_csv_is_reproducible() {
    let mut c = small();
    c.optimizer.mode = Default::default();
    c.monte_carlo.runs = 3;
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    for i in 0..a.series.len() {
        assert_eq!(a.series_csv(i), b.series_csv(i));
    }
    assert_eq!(a.summary_csv(), b.summary_csv());
}

#[test]
fn diagnostics_fill_optional_columns() {
    let mut c = small();
    c.optimizer.diagnostics = true;
    let r = run_experiment(&c).unwrap();
    let s = &r.series[0];
    assert!(s.mean.iter().all(|m| m.consensus_z.is_some() && m.equiv_defect.is_some()));
    assert!(s.max_equiv_defect.unwrap() <= 1e-9);
    let line = r.series_csv(0).lines().nth(5).unwrap().to_string();
    assert!(!line.ends_with(','));
}

#[test]
fn diverging_runs_are_counted_not_averaged() {
    let mut c = small();
    c.optimizer.mu = 50.0;
    c.series.truncate(1);
    let r = run_experiment(&c).unwrap();
    let s = &r.series[0];
    assert_eq!(s.diverged.len(), 1);
    assert!(s.seeds.is_empty());
    assert!(s.steady_state_msd().is_nan());
}

#[test]
fn paired_difference_uses_shared_seeds() {
    let mut c = small();
    c.optimizer.mode = Default::default();
    c.monte_carlo.runs = 4;
    c.series = vec![c.series[0].clone(), c.series[0].clone()];
    c.series[1].label = "copy".into();
    let r = run_experiment(&c).unwrap();
    assert_eq!(paired_difference(&r.series[0], &r.series[1]), (0.0, 0.0));
}

#[test]
fn perturbed_series_certificate_is_near_target() {
    let mut c = small();
    c.series.truncate(1);
    c.series[0].sequence = SequenceSpec::Perturbed { target_eps: 0.4, tol: 0.01, seed: 3, construction: Default::default() };
    let r = run_experiment(&c).unwrap();
    assert!((r.series[0].certificate.epsilon - 0.4).abs() <= 0.01);
}
