use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ChainConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::posterior::LogDensity;
use crate::rng::{self, Rng as ChainRng};
use crate::samples::SampleMatrix;

/// Two-stage minimal-norm splitting coefficient (Omelyan, Mryglod and Folk).
pub const MINIMAL_NORM_LAMBDA: f64 = 0.193_183_327_503_783_6;

/// Position, momentum, log density and gradient at one point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub position: DVector<f64>,
    pub momentum: DVector<f64>,
    pub log_p: f64,
    pub grad: DVector<f64>,
}

/// Integrates `steps` minimal-norm steps of size `eps`:
/// momentum kicks of `lambda eps`, `(1 - 2 lambda) eps`, `lambda eps`
/// interleaved with two half drifts. Returns `None` on leaving the support
/// or on a non-finite value.
pub fn integrate(
    density: &dyn LogDensity,
    start: &Phase,
    eps: f64,
    steps: usize,
    inv_mass: &DMatrix<f64>,
) -> Result<Option<Phase>> {
    let lam = MINIMAL_NORM_LAMBDA;
    let mut x = start.position.clone();
    let mut p = start.momentum.clone();
    let mut grad = start.grad.clone();
    let mut log_p = start.log_p;
    for _ in 0..steps {
        p.axpy(lam * eps, &grad, 1.0);
        x += inv_mass * &p * (0.5 * eps);
        match density.value_and_grad(&x) {
            Ok((_, g)) if g.iter().all(|v| v.is_finite()) => grad = g,
            Ok(_) | Err(Error::OutOfSupport) => return Ok(None),
            Err(e) => return Err(e),
        }
        p.axpy((1.0 - 2.0 * lam) * eps, &grad, 1.0);
        x += inv_mass * &p * (0.5 * eps);
        match density.value_and_grad(&x) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|v| v.is_finite()) => {
                log_p = v;
                grad = g;
            }
            Ok(_) | Err(Error::OutOfSupport) => return Ok(None),
            Err(e) => return Err(e),
        }
        p.axpy(lam * eps, &grad, 1.0);
    }
    Ok(Some(Phase { position: x, momentum: p, log_p, grad }))
}

/// Hamiltonian Monte Carlo with a fixed step size and trajectory length.
/// Trajectories that leave the support count as divergences and are rejected.
pub struct HmcSampler<'a> {
    density: &'a dyn LogDensity,
    cfg: ChainConfig,
    current: Phase,
    mass_chol: Cholesky<f64, Dyn>,
    inv_mass: DMatrix<f64>,
    rng: ChainRng,
    iteration: usize,
    accepted: usize,
    divergences: usize,
    draws: Vec<f64>,
    started: Instant,
}

impl<'a> HmcSampler<'a> {
    pub fn new(density: &'a dyn LogDensity, start: &DVector<f64>, cfg: &ChainConfig) -> Result<Self> {
        let p = density.dim();
        cfg.validate(p)?;
        if !density.smooth() {
            return Err(Error::NonDifferentiable("gradient unavailable for HMC; use MH".into()));
        }
        if start.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: start.len() });
        }
        let (log_p, grad) = match density.value_and_grad(start) {
            Ok(vg) if vg.0.is_finite() => vg,
            Ok(_) | Err(Error::OutOfSupport) => return Err(Error::OutOfSupport),
            Err(e) => return Err(e),
        };
        let mass = cfg.mass_matrix(p)?;
        let mass_chol = linalg::cholesky(&mass).ok_or(Error::ImproperGaussian)?;
        let inv_mass = mass_chol.inverse();
        Ok(Self {
            density,
            cfg: cfg.clone(),
            current: Phase { position: start.clone(), momentum: DVector::zeros(p), log_p, grad },
            mass_chol,
            inv_mass,
            rng: rng::stream(cfg.seed, &[0x686d63]),
            iteration: 0,
            accepted: 0,
            divergences: 0,
            draws: Vec::with_capacity(cfg.draws * p),
            started: Instant::now(),
        })
    }

    fn kinetic(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&(&self.inv_mass * p))
    }

    /// One trajectory plus the accept/reject decision.
    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        let dim = self.current.position.len();
        let z = DVector::from_fn(dim, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let mut start = self.current.clone();
        start.momentum = self.mass_chol.l() * z;
        let h0 = -start.log_p + self.kinetic(&start.momentum);
        let end = integrate(self.density, &start, self.cfg.step_size, self.cfg.n_leapfrog, &self.inv_mass)?;
        let u: f64 = self.rng.random();
        let mut moved = false;
        match end {
            Some(end) => {
                let h1 = -end.log_p + self.kinetic(&end.momentum);
                if !h1.is_finite() {
                    self.divergences += 1;
                } else if u.ln() < h0 - h1 {
                    self.current = end;
                    moved = true;
                }
            }
            None => self.divergences += 1,
        }
        self.iteration += 1;
        self.accepted += usize::from(moved);
        if self.iteration > self.cfg.burn_in {
            self.draws.extend(self.current.position.iter());
        }
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.retained() >= self.cfg.draws
    }

    pub fn retained(&self) -> usize {
        self.draws.len() / self.current.position.len()
    }

    pub fn divergences(&self) -> usize {
        self.divergences
    }

    pub fn accept_rate(&self) -> f64 {
        if self.iteration == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iteration as f64
        }
    }

    pub fn samples(&self) -> SampleMatrix {
        let p = self.current.position.len();
        SampleMatrix {
            draws: DMatrix::from_row_slice(self.retained(), p, &self.draws),
            accept_rate: self.accept_rate(),
            seconds: self.started.elapsed().as_secs_f64(),
            method: "hmc".into(),
            seed: self.cfg.seed,
            burn_in: self.cfg.burn_in,
        }
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{dmatrix, dvector};

    use super::*;
    use crate::gaussian::{MomentGaussian, NaturalGaussian};
    use crate::samplers::hmc_run;

    fn phase(target: &NaturalGaussian, x: DVector<f64>, p: DVector<f64>) -> Phase {
        let (log_p, grad) = target.value_and_grad(&x).unwrap();
        Phase { position: x, momentum: p, log_p, grad }
    }

    fn correlated() -> NaturalGaussian {
        NaturalGaussian::from_moments(&MomentGaussian::new(dvector![0.5, -1.0], dmatrix![1.0, 0.3; 0.3, 0.5]).unwrap())
            .unwrap()
    }

    #[test]
    fn energy_is_nearly_conserved() {
        let target = correlated();
        let inv = DMatrix::identity(2, 2);
        let start = phase(&target, dvector![1.5, 0.2], dvector![0.7, -1.1]);
        let end = integrate(&target, &start, 0.01, 50, &inv).unwrap().unwrap();
        let h = |ph: &Phase| -ph.log_p + 0.5 * ph.momentum.norm_squared();
        assert!((h(&end) - h(&start)).abs() < 1e-3);
    }

    #[test]
    fn trajectories_are_time_reversible() {
        let target = correlated();
        let inv = DMatrix::identity(2, 2);
        let start = phase(&target, dvector![1.5, 0.2], dvector![0.7, -1.1]);
        let mut end = integrate(&target, &start, 0.01, 50, &inv).unwrap().unwrap();
        end.momentum = -end.momentum;
        let back = integrate(&target, &end, 0.01, 50, &inv).unwrap().unwrap();
        assert!((back.position - start.position).amax() < 1e-8);
        assert!((back.momentum + start.momentum).amax() < 1e-8);
    }

    #[test]
    fn non_smooth_density_is_refused() {
        struct Rough;
        impl LogDensity for Rough {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, t: &DVector<f64>) -> Result<f64> {
                Ok(-t[0].abs())
            }
            fn value_and_grad(&self, _: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
                Err(Error::NonDifferentiable("rough".into()))
            }
            fn smooth(&self) -> bool {
                false
            }
        }
        let r = HmcSampler::new(&Rough, &dvector![0.0], &ChainConfig::default());
        assert!(matches!(r, Err(Error::NonDifferentiable(_))));
    }

    #[test]
    fn seeded_runs_repeat() {
        let target = correlated();
        let cfg = ChainConfig { draws: 200, burn_in: 10, seed: 4, ..Default::default() };
        let a = hmc_run(&target, &dvector![0.0, 0.0], &cfg).unwrap();
        let b = hmc_run(&target, &dvector![0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.draws, b.draws);
        assert!(a.accept_rate > 0.9);
    }
}
