use epel::epel::EpConfig;
use epel::harness::{self, Clock, ExperimentSpec, Method};
use epel::models::Experiment;

/// A linreg2 run small enough for a unit-test budget, measured in EL
/// evaluations so it repeats exactly.
fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(Experiment::Linreg2, vec![Method::Laplace, Method::Epel]);
    spec.reps = 2;
    spec.clock = Clock::Evaluations;
    spec.checkpoint_schedule = vec![2_000.0, 1e9];
    spec.budget_seconds = 1e9;
    spec.gold.draws = 6_000;
    spec.gold.burn_in = 1_000;
    spec.nbp_draws = 200;
    spec.master_seed = 11;
    spec.config.epel = Some(EpConfig { warmup_cycles: 2, max_cycles: 4, is_samples: 300, ..EpConfig::default() });
    spec
}

#[test]
fn one_row_per_method_checkpoint_and_rep_plus_controls() {
    let spec = small_spec();
    let out = harness::run_experiment(&spec).unwrap();
    assert_eq!(out.rows.len(), spec.reps * (1 + 2 * 2));
    let controls = out.rows.iter().filter(|r| r.method == harness::CONTROL).count();
    assert_eq!(controls, spec.reps);
    for r in out.rows.iter().filter(|r| r.method != harness::CONTROL) {
        assert!(r.skipped.is_none(), "{r:?}");
        assert!(r.nbp_count.unwrap() <= spec.nbp_draws);
        assert_eq!(r.threshold, out.manifest.threshold);
    }
    let summary = harness::summarize(&out.rows).unwrap();
    assert_eq!(summary.len(), 1 + 2 * 2);
    assert!(summary.iter().all(|s| s.total == spec.reps));
    let svg = harness::svg_chart(&summary, out.manifest.threshold).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn evaluation_clock_runs_repeat_exactly() {
    let mut spec = small_spec();
    spec.reps = 1;
    spec.control = false;
    let a = harness::run_experiment(&spec).unwrap();
    let b = harness::run_experiment(&spec).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.manifest.seeds, b.manifest.seeds);
}

#[test]
fn a_single_laplace_checkpoint_gives_one_row() {
    let mut spec = small_spec();
    spec.methods = vec![Method::Laplace];
    spec.reps = 1;
    spec.control = false;
    spec.checkpoint_schedule = vec![1.0];
    spec.budget_seconds = 1.0;
    let out = harness::run_experiment(&spec).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].method, "laplace");
}

#[test]
fn invalid_specs_are_rejected() {
    let base = small_spec();
    let broken: Vec<Box<dyn Fn(&mut ExperimentSpec)>> = vec![
        Box::new(|s| s.reps = 0),
        Box::new(|s| s.methods.clear()),
        Box::new(|s| s.methods = vec![Method::Mh, Method::Mh]),
        Box::new(|s| s.gold.method = Method::Laplace),
        Box::new(|s| s.checkpoint_schedule = vec![]),
        Box::new(|s| s.checkpoint_schedule = vec![5.0, 2.0]),
        Box::new(|s| s.checkpoint_schedule = vec![-1.0]),
        Box::new(|s| s.budget_seconds = 0.5),
        Box::new(|s| s.gold.draws = 300),
    ];
    assert!(base.validate().is_ok());
    for (i, f) in broken.iter().enumerate() {
        let mut s = base.clone();
        f(&mut s);
        assert!(s.validate().is_err(), "case {i}");
        assert!(harness::run_experiment(&s).is_err(), "case {i}");
    }
}

#[test]
fn outputs_round_trip_through_the_results_file() {
    let mut spec = small_spec();
    spec.reps = 1;
    spec.methods = vec![Method::Laplace];
    let out = harness::run_experiment(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    harness::write_outputs(dir.path(), &out).unwrap();
    for f in [harness::RESULTS_FILE, harness::SUMMARY_FILE, harness::MANIFEST_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = harness::read_rows(std::fs::File::open(dir.path().join(harness::RESULTS_FILE)).unwrap()).unwrap();
    assert_eq!(back, out.rows);
    let manifest: serde_json::Value =
        serde_json::from_reader(std::fs::File::open(dir.path().join(harness::MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["threshold"], out.manifest.threshold);
}

#[test]
fn specs_parse_from_json_with_defaults() {
    let spec: ExperimentSpec = serde_json::from_str(r#"{"name": "linreg2", "methods": ["epel", "laplace"]}"#).unwrap();
    assert_eq!(spec, ExperimentSpec::new(Experiment::Linreg2, vec![Method::Epel, Method::Laplace]));
    assert!(serde_json::from_str::<ExperimentSpec>(r#"{"name": "nope", "methods": []}"#).is_err());
}
