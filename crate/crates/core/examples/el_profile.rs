//! Profile empirical likelihood of a mean: the Lagrange multiplier, the
//! weights and `log EL(mu)` across a grid, including points outside the hull.
//!
//! `cargo run --release --example el_profile`

use epel::elcore::{solve_lambda, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nalgebra::DMatrix;

fn main() -> epel::Result<()> {
    let z = [1.2, -0.4, 0.3, 2.1, 0.8, -1.0, 0.5];
    println!("{:>6} {:>10} {:>12} {:>6}", "mu", "lambda", "log EL", "iters");
    for k in 0..=12 {
        let mu = -1.5 + 0.35 * k as f64;
        let h = DMatrix::from_fn(z.len(), 1, |i, _| z[i] - mu);
        let ev = solve_lambda(&h, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        if ev.in_support {
            println!("{mu:>6.2} {:>10.5} {:>12.6} {:>6}", ev.lambda[0], ev.log_el, ev.iterations);
        } else {
            println!("{mu:>6.2} {:>10} {:>12} {:>6}", "-", "-inf", ev.iterations);
        }
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let h = DMatrix::from_fn(z.len(), 1, |i, _| z[i] - mean);
    let ev = solve_lambda(&h, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    println!("at the sample mean {mean:.4}: weights {:.4?}", ev.weights.as_slice());
    Ok(())
}
