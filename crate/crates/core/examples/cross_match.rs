//! Cross-match of two Gaussian samples: same distribution versus a shifted one.
//!
//! Usage: cargo run --release --example cross_match [N] [shift]

use std::time::Instant;

use epel::nbp;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, p: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = epel::rng::from_seed(seed);
    DMatrix::from_fn(n, p, |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z + if j == 0 { shift } else { 0.0 }
    })
}

fn main() -> epel::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let shift: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);

    let start = Instant::now();
    let threshold = nbp::default_threshold(n)?;
    println!("null 0.05 quantile for N = {n}: {threshold} (mean {:.2}), {:.2?}", nbp::null_mean(n), start.elapsed());

    let a = gaussian(n, 2, 0.0, 1);
    for (label, b) in [("same", gaussian(n, 2, 0.0, 2)), ("shifted", gaussian(n, 2, shift, 3))] {
        let start = Instant::now();
        let r = nbp::cross_match_with_threshold(&a, &b, threshold, false)?;
        println!(
            "{label:>8}: cross pairs {} / {} (pass = {}), matched in {:.2?}",
            r.cross_count,
            r.total_pairs,
            r.pass,
            start.elapsed()
        );
    }
    Ok(())
}
