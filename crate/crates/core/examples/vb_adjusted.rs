//! Gaussian variational Bayes on the adjusted-EL posterior, whose extra
//! pseudo-observation keeps every parameter value in the support.
//!
//! `cargo run --release --example vb_adjusted -- [steps]`

use epel::models::Experiment;
use epel::vb::{self, VbConfig};
use epel::Target;

fn main() -> epel::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let exp = Experiment::Linreg2;
    let target = Target::new(exp.model(true), exp.dataset(1)?)?;
    let cfg = VbConfig { steps, learning_rate: 5e-3, mc_samples: 4, seed: 1, ..VbConfig::default() };
    let (q, trace) = vb::vb_for_target(&target, &cfg)?;
    for r in trace.records.iter().step_by((steps / 10).max(1)) {
        println!("step {:>6}  elbo {:>10.4}", r.step, r.elbo_estimate);
    }
    let m = q.to_moments()?;
    let lap = target.laplace()?.approx.to_moments()?;
    println!("vb mean {:.4?}  sd {:.4?}", m.mu.as_slice(), m.sigma.diagonal().map(f64::sqrt).as_slice());
    println!("laplace mean {:.4?}  sd {:.4?}", lap.mu.as_slice(), lap.sigma.diagonal().map(f64::sqrt).as_slice());
    Ok(())
}
