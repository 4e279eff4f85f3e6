//! A small cost-accuracy experiment driven from code: Laplace, EPEL and MH on
//! the two-parameter regression, scored by cross-match against a reference
//! chain, written to a directory with a summary and an SVG chart.
//!
//! `cargo run --release --example experiment -- [out_dir]`

use std::path::PathBuf;

use epel::harness::{self, ExperimentSpec, Method};
use epel::models::Experiment;

fn main() -> epel::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "experiment_out".into()));
    let mut spec = ExperimentSpec::new(Experiment::Linreg2, vec![Method::Laplace, Method::Epel, Method::Mh]);
    spec.reps = 2;
    spec.budget_seconds = 4.0;
    spec.checkpoint_schedule = vec![0.5, 1.0, 2.0, 4.0];
    spec.gold.draws = 200_000;
    let output = harness::run_experiment_with(&spec, &mut |row| {
        println!(
            "rep {} {:<8} @ {:>4}s  nbp {:>5}  {}",
            row.rep,
            row.method,
            row.checkpoint_seconds,
            row.nbp_count.map_or("-".to_string(), |c| c.to_string()),
            row.skipped.as_deref().unwrap_or(&row.extra)
        );
    })?;
    harness::write_outputs(&out, &output)?;
    let summary = harness::summarize(&output.rows)?;
    std::fs::write(out.join("nbp.svg"), harness::svg_chart(&summary, output.manifest.threshold)?)?;
    println!("wrote {}", out.display());
    Ok(())
}
