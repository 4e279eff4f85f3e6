use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ChainConfig;
use crate::error::{Error, Result};
use crate::gaussian::matrix_from_rows;
use crate::linalg;
use crate::posterior::LogDensity;
use crate::rng::{self, Rng as ChainRng};
use crate::samples::SampleMatrix;

/// Gaussian random-walk Metropolis-Hastings, advanced one proposal at a time.
///
/// Without a configured proposal covariance the chain first runs
/// `pilot_draws` iterations with an isotropic proposal and then switches to
/// `shrinkage` times the pilot sample covariance.
pub struct MhSampler<'a> {
    density: &'a dyn LogDensity,
    cfg: ChainConfig,
    state: DVector<f64>,
    log_p: f64,
    chol: DMatrix<f64>,
    rng: ChainRng,
    pilot: Option<Vec<DVector<f64>>>,
    iteration: usize,
    accepted: usize,
    draws: Vec<f64>,
    started: Instant,
}

impl<'a> MhSampler<'a> {
    pub fn new(density: &'a dyn LogDensity, start: &DVector<f64>, cfg: &ChainConfig) -> Result<Self> {
        let p = density.dim();
        cfg.validate(p)?;
        if start.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: start.len() });
        }
        let log_p = density.log_density(start)?;
        if !log_p.is_finite() {
            return Err(Error::OutOfSupport);
        }
        let (chol, pilot) = match &cfg.proposal_cov {
            Some(rows) => (proposal_factor(&matrix_from_rows(rows, p)?)?, None),
            None if cfg.pilot_draws > 1 => {
                (DMatrix::identity(p, p) * cfg.pilot_scale, Some(Vec::with_capacity(cfg.pilot_draws)))
            }
            None => return Err(Error::InvalidInput("need a proposal covariance or a pilot run".into())),
        };
        Ok(Self {
            density,
            cfg: cfg.clone(),
            state: start.clone(),
            log_p,
            chol,
            rng: rng::stream(cfg.seed, &[0x6d68]),
            pilot,
            iteration: 0,
            accepted: 0,
            draws: Vec::with_capacity(cfg.draws * p),
            started: Instant::now(),
        })
    }

    fn propose(&mut self) -> Result<bool> {
        let p = self.state.len();
        let z = DVector::from_fn(p, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let proposal = &self.state + &self.chol * z;
        let log_p = self.density.log_density(&proposal)?;
        let u: f64 = self.rng.random();
        if log_p.is_finite() && u.ln() < log_p - self.log_p {
            self.state = proposal;
            self.log_p = log_p;
            return Ok(true);
        }
        Ok(false)
    }

    /// One MH iteration (pilot or main phase).
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        let accepted = self.propose()?;
        if let Some(pilot) = &mut self.pilot {
            pilot.push(self.state.clone());
            if pilot.len() == self.cfg.pilot_draws {
                let cov = sample_covariance(pilot);
                self.chol = proposal_factor(&(cov * self.cfg.shrinkage))?;
                self.pilot = None;
            }
            return Ok(());
        }
        self.iteration += 1;
        self.accepted += usize::from(accepted);
        if self.iteration > self.cfg.burn_in {
            self.draws.extend(self.state.iter());
        }
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.retained() >= self.cfg.draws
    }

    pub fn in_pilot(&self) -> bool {
        self.pilot.is_some()
    }

    /// Draws kept so far (after burn-in).
    pub fn retained(&self) -> usize {
        self.draws.len() / self.state.len()
    }

    /// Cholesky factor of the current proposal covariance.
    pub fn proposal_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn accept_rate(&self) -> f64 {
        if self.iteration == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iteration as f64
        }
    }

    /// The retained draws so far.
    pub fn samples(&self) -> SampleMatrix {
        let p = self.state.len();
        let draws = DMatrix::from_row_slice(self.retained(), p, &self.draws);
        SampleMatrix {
            draws,
            accept_rate: self.accept_rate(),
            seconds: self.started.elapsed().as_secs_f64(),
            method: "mh".into(),
            seed: self.cfg.seed,
            burn_in: self.cfg.burn_in,
        }
    }
}

fn sample_covariance(xs: &[DVector<f64>]) -> DMatrix<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().fold(DVector::zeros(xs[0].len()), |acc, x| acc + x) / n;
    let mut cov = DMatrix::zeros(mean.len(), mean.len());
    for x in xs {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    cov / (n - 1.0)
}

/// Lower Cholesky factor of a proposal covariance, ridge-repaired when the
/// estimate is singular (a pilot that never moved along some direction).
fn proposal_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cov = linalg::symmetrize(cov);
    let cov = if linalg::is_pd(&cov) { cov } else { linalg::ridge_repair(&cov, 1e-8).0 };
    linalg::cholesky(&cov).map(|c| c.l()).ok_or(Error::ImproperGaussian)
}
