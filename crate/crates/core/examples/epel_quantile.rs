//! EPEL for median-type quantile regression with the step score (importance
//! sampling only) against the smoothed score (Laplace warm-up, then IS).
//!
//! `cargo run --release --example epel_quantile -- [seed]`

use epel::epel::{run as run_epel, EpConfig};
use epel::models::Experiment;
use epel::Target;

fn main() -> epel::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let exp = Experiment::Quantile;
    let data = exp.dataset(seed)?;
    let config = EpConfig { num_sites: exp.ep_sites(), max_cycles: 60, seed, ..EpConfig::default() };
    for smooth in [false, true] {
        let target = Target::new(exp.model(smooth), data.clone())?;
        let (global, trace) = run_epel(&target, config.clone())?;
        let m = global.to_moments()?;
        println!(
            "{:<6} mean {:.4?}  sd {:.4?}  ({} cycles, converged {})",
            if smooth { "smooth" } else { "step" },
            m.mu.as_slice(),
            m.sigma.diagonal().map(f64::sqrt).as_slice(),
            trace.records.len(),
            trace.converged
        );
    }
    Ok(())
}
