//! MAP and Laplace approximation of the EL posterior for every experiment;
//! the quantile model is non-smooth, so its Laplace fit uses the surrogate.
//!
//! `cargo run --release --example laplace_map -- [seed]`

use epel::models::Experiment;
use epel::Target;

fn main() -> epel::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for exp in Experiment::ALL {
        let target = Target::new(exp.model(false), exp.dataset(seed)?)?;
        let lap = target.laplace_or_surrogate()?;
        let sd = lap.approx.to_moments()?.sigma.diagonal().map(f64::sqrt);
        println!(
            "{:<9} n={:<4} newton iters {:<3} converged {}",
            exp.name(),
            target.data().n(),
            lap.newton_iters,
            lap.converged
        );
        println!("          mode {:.4?}", lap.mode.as_slice());
        println!("          sd   {:.4?}", sd.as_slice());
    }
    Ok(())
}
