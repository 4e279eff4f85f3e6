//! EPEL on a simulated two-parameter linear regression, compared with the
//! Laplace approximation.
//!
//! `cargo run --release --example epel_linreg -- [seed]`

use std::time::Instant;

use epel::epel::{EpConfig, EpRunner};
use epel::models::Experiment;
use epel::Target;

fn main() -> epel::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let exp = Experiment::Linreg2;
    let data = exp.dataset(seed)?;
    let target = Target::new(exp.model(true), data)?;
    let laplace = target.laplace()?;
    println!("laplace mode {:.4?}", laplace.mode.as_slice());

    let config = EpConfig { num_sites: exp.ep_sites(), seed, ..EpConfig::default() };
    let started = Instant::now();
    let mut runner = EpRunner::for_target(&target, &laplace.approx, config)?;
    while !runner.step()? {
        let rec = runner.trace().records.last().expect("one record per cycle");
        if std::env::var_os("EPEL_VERBOSE").is_some() || rec.cycle % 10 == 0 {
            println!("cycle {:>3}  max update {:.3e}  alpha {:.3}", rec.cycle, rec.max_update, rec.alpha_used);
            if std::env::var_os("EPEL_VERBOSE").is_some() {
                for d in runner.state().diagnostics.iter().filter(|d| d.note.is_some()) {
                    println!("  {:?}", d);
                }
            }
        }
    }
    let global = runner.global().clone();
    let moments = global.to_moments()?;
    println!(
        "epel mean {:.4?} after {} cycles, {:.2}s, {} EL solves",
        moments.mu.as_slice(),
        runner.state().cycle,
        started.elapsed().as_secs_f64(),
        target.el_evals()
    );
    println!("epel covariance {:.5}", moments.sigma);
    println!("laplace covariance {:.5}", laplace.approx.to_moments()?.sigma);
    Ok(())
}
