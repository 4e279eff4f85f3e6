//! Natural-parameter algebra behind EP: sites multiply by adding natural
//! parameters, cavities divide them out, and Gaussian sites are recovered in
//! a single undamped cycle.
//!
//! `cargo run --release --example gaussian_sites`

use epel::epel::{EpConfig, EpRunner, GaussianSite, SiteFactor};
use epel::{MomentGaussian, NaturalGaussian};
use nalgebra::{dmatrix, dvector};

fn main() -> epel::Result<()> {
    let a = NaturalGaussian::from_moments(&MomentGaussian::new(dvector![1.0, 0.0], dmatrix![1.0, 0.3; 0.3, 2.0])?)?;
    let b = NaturalGaussian::from_moments(&MomentGaussian::new(dvector![-1.0, 2.0], dmatrix![0.5, 0.0; 0.0, 0.5])?)?;
    let c = NaturalGaussian::isotropic(&dvector![0.0, 0.0], 100.0);
    let product = a.product(&b)?.product(&c)?;
    let m = product.to_moments()?;
    println!("product mean {:.4?}", m.mu.as_slice());
    println!("product covariance {:.4}", m.sigma);
    println!("cavity without b is a*c: {:.4?}", product.quotient(&b)?.to_moments()?.mu.as_slice());

    let sites: Vec<Box<dyn SiteFactor>> =
        [a, b, c].into_iter().map(|f| Box::new(GaussianSite::new(f)) as Box<dyn SiteFactor>).collect();
    let init = NaturalGaussian::isotropic(&dvector![0.0, 0.0], 1.0);
    let config = EpConfig { num_sites: 3, damping: 1.0, ..EpConfig::default() };
    let mut runner = EpRunner::new(sites, &init, config)?;
    for _ in 0..2 {
        runner.step()?;
        let gap = (runner.global().r() - product.r()).norm() + (runner.global().q() - product.q()).norm();
        println!("cycle {}: distance to the exact product {gap:.2e}", runner.state().cycle);
    }
    Ok(())
}
