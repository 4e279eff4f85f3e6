//! Random-walk MH and minimal-norm HMC on the linear-regression EL posterior,
//! with acceptance rates and integrated autocorrelation times.
//!
//! `cargo run --release --example samplers -- [draws]`

use epel::models::Experiment;
use epel::samplers::{self, integrated_autocorr, ChainConfig};
use epel::Target;

fn main() -> epel::Result<()> {
    let draws = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let exp = Experiment::Linreg2;
    let target = Target::new(exp.model(true), exp.dataset(1)?)?;
    let (start, pilot_scale) = samplers::target_start(&target)?;
    let mh_cfg = ChainConfig { draws, pilot_scale, shrinkage: exp.mh_shrinkage(), seed: 1, ..ChainConfig::default() };
    let hmc_cfg = ChainConfig { draws: draws / 10, burn_in: 1000, seed: 2, ..ChainConfig::default() };
    for chain in [samplers::mh_run(&target, &start, &mh_cfg)?, samplers::hmc_run(&target, &start, &hmc_cfg)?] {
        let tau: Vec<f64> = (0..chain.dim()).map(|j| integrated_autocorr(chain.draws.column(j).as_slice())).collect();
        println!(
            "{:<4} {:>6} draws  accept {:.3}  mean {:.4?}  tau {:.1?}  {:.1}s",
            chain.method,
            chain.len(),
            chain.accept_rate,
            chain.mean(),
            tau,
            chain.seconds
        );
    }
    println!("laplace mode {:.4?}", start.as_slice());
    Ok(())
}
