//! MCMC baselines: random-walk Metropolis-Hastings and Hamiltonian Monte Carlo
//! with a minimal-norm integrator. Both target any [`LogDensity`].

mod diagnostics;
mod hmc;
mod mh;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use diagnostics::{integrated_autocorr, ks_statistic};
pub use hmc::{integrate, HmcSampler, Phase, MINIMAL_NORM_LAMBDA};
pub use mh::MhSampler;

use crate::error::{Error, Result};
use crate::gaussian::{matrix_from_rows, matrix_rows};
use crate::posterior::{LogDensity, Target};
use crate::samples::SampleMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Draws kept after burn-in.
    pub draws: usize,
    pub burn_in: usize,
    pub step_size: f64,
    pub n_leapfrog: usize,
    /// HMC mass matrix; identity when absent.
    pub mass: Option<Vec<Vec<f64>>>,
    /// MH proposal covariance; estimated by a pilot run when absent.
    pub proposal_cov: Option<Vec<Vec<f64>>>,
    pub shrinkage: f64,
    /// Length of the isotropic MH pilot run.
    pub pilot_draws: usize,
    /// Standard deviation of the isotropic pilot proposal.
    pub pilot_scale: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            draws: 10_000,
            burn_in: 10_000,
            step_size: 0.01,
            n_leapfrog: 50,
            mass: None,
            proposal_cov: None,
            shrinkage: 0.7,
            pilot_draws: 10_000,
            pilot_scale: 0.1,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidInput("draws must be positive".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidInput("step size must be positive".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidInput(format!("shrinkage must lie in (0, 1], got {}", self.shrinkage)));
        }
        if !(self.pilot_scale > 0.0) {
            return Err(Error::InvalidInput("pilot scale must be positive".into()));
        }
        for m in [&self.mass, &self.proposal_cov].into_iter().flatten() {
            let m = matrix_from_rows(m, p)?;
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::DimensionMismatch { expected: p, got: m.nrows() });
            }
        }
        Ok(())
    }

    pub fn mass_matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        match &self.mass {
            Some(rows) => matrix_from_rows(rows, p),
            None => Ok(DMatrix::identity(p, p)),
        }
    }

    pub fn with_proposal_cov(mut self, cov: &DMatrix<f64>) -> Self {
        self.proposal_cov = Some(matrix_rows(cov));
        self
    }
}

/// Starting point and pilot proposal scale for a posterior target: the MAP
/// (of the smooth surrogate for non-smooth constraints) and
/// `2.38 / sqrt(p)` times the root mean Laplace variance.
pub fn target_start(target: &Target) -> Result<(DVector<f64>, f64)> {
    let laplace = target.laplace_or_surrogate()?;
    let p = target.p() as f64;
    let sigma = laplace.approx.to_moments()?.sigma;
    let mean_var = sigma.diagonal().mean();
    Ok((laplace.mode, 2.38 / p.sqrt() * mean_var.sqrt()))
}

/// Random-walk MH run to completion.
pub fn mh_run(density: &dyn LogDensity, start: &DVector<f64>, cfg: &ChainConfig) -> Result<SampleMatrix> {
    let mut sampler = MhSampler::new(density, start, cfg)?;
    while !sampler.is_done() {
        sampler.step()?;
    }
    Ok(sampler.samples())
}

/// HMC run to completion.
pub fn hmc_run(density: &dyn LogDensity, start: &DVector<f64>, cfg: &ChainConfig) -> Result<SampleMatrix> {
    let mut sampler = HmcSampler::new(density, start, cfg)?;
    while !sampler.is_done() {
        sampler.step()?;
    }
    Ok(sampler.samples())
}

/// Drops `burn_in` rows and keeps `count` evenly spaced rows of the rest,
/// starting with row `burn_in`.
pub fn thin_and_pool(chain: &SampleMatrix, burn_in: usize, count: usize) -> Result<SampleMatrix> {
    let m = chain.len();
    if burn_in >= m {
        return Err(Error::InvalidInput(format!("burn-in {burn_in} leaves nothing of {m} draws")));
    }
    let remaining = m - burn_in;
    if count > remaining {
        return Err(Error::InvalidInput(format!("asked for {count} draws, only {remaining} remain")));
    }
    let rows: Vec<usize> = (0..count).map(|k| burn_in + k * remaining / count).collect();
    let draws = DMatrix::from_fn(count, chain.dim(), |i, j| chain.draws[(rows[i], j)]);
    Ok(SampleMatrix { draws, burn_in: chain.burn_in + burn_in, ..chain.clone() })
}
