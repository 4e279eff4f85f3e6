//! Logistic regression on the bundled Kyphosis table: EPEL against Laplace.
//!
//! `cargo run --release --example kyphosis_logistic`

use epel::epel::{run as run_epel, EpConfig};
use epel::models::Experiment;
use epel::Target;

fn main() -> epel::Result<()> {
    let exp = Experiment::Kyphosis;
    let target = Target::new(exp.model(true), exp.dataset(0)?)?;
    let laplace = target.laplace()?;
    let config = EpConfig { num_sites: exp.ep_sites(), max_cycles: 60, ..EpConfig::default() };
    let (global, trace) = run_epel(&target, config)?;
    let ep = global.to_moments()?;
    let lap = laplace.approx.to_moments()?;
    println!("n = {}, {} EPEL cycles, {} EL solves", target.data().n(), trace.records.len(), target.el_evals());
    for j in 0..target.p() {
        println!(
            "theta_{}: epel {:>8.4} +- {:.4}   laplace {:>8.4} +- {:.4}",
            j + 1,
            ep.mu[j],
            ep.sigma[(j, j)].sqrt(),
            lap.mu[j],
            lap.sigma[(j, j)].sqrt()
        );
    }
    Ok(())
}
