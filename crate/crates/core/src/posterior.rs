//! The empirical-likelihood posterior `log p(theta) + log EL(theta)` and its
//! Laplace approximation.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::elcore::{self, ELEvaluation, ELGradient};
use crate::error::{Error, Result};
use crate::gaussian::{matrix_from_rows, matrix_rows, NaturalGaussian};
use crate::linalg;
use crate::models::{self, Dataset, SharedModel};

/// Prior standard deviation on every coordinate.
pub const PRIOR_SD: f64 = 10.0;

/// An unnormalized log density, `-inf` outside its support.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &DVector<f64>) -> Result<f64>;

    /// Value and gradient; `OutOfSupport` where the density vanishes.
    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)>;

    fn smooth(&self) -> bool {
        true
    }
}

impl LogDensity for NaturalGaussian {
    fn dim(&self) -> usize {
        NaturalGaussian::dim(self)
    }

    fn log_density(&self, theta: &DVector<f64>) -> Result<f64> {
        self.log_pdf(theta)
    }

    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.log_pdf(theta)?, self.grad_log_kernel(theta)))
    }
}

/// Prior times empirical likelihood for one model and dataset.
#[derive(Debug, Clone)]
pub struct Target {
    model: SharedModel,
    data: Arc<Dataset>,
    prior: NaturalGaussian,
    el_enabled: bool,
    evals: Arc<AtomicU64>,
}

impl Target {
    /// Target with the default `N(0, 10^2 I)` prior.
    pub fn new(model: SharedModel, data: Dataset) -> Result<Self> {
        if data.width() != model.width() {
            return Err(Error::DimensionMismatch { expected: model.width(), got: data.width() });
        }
        let p = model.p();
        let prior = NaturalGaussian::isotropic(&DVector::zeros(p), PRIOR_SD * PRIOR_SD);
        Ok(Self { model, data: Arc::new(data), prior, el_enabled: true, evals: Arc::default() })
    }

    pub fn with_prior(mut self, prior: NaturalGaussian) -> Result<Self> {
        if prior.dim() != self.model.p() {
            return Err(Error::DimensionMismatch { expected: self.model.p(), got: prior.dim() });
        }
        if !prior.is_proper() {
            return Err(Error::ImproperGaussian);
        }
        self.prior = prior;
        Ok(self)
    }

    /// Drops the likelihood factor, leaving the prior alone.
    pub fn prior_only(mut self) -> Self {
        self.el_enabled = false;
        self
    }

    /// Same model and prior on other data; the evaluation counter is fresh.
    pub fn with_data(&self, data: Dataset) -> Result<Self> {
        let mut t = Target::new(self.model.clone(), data)?.with_prior(self.prior.clone())?;
        t.el_enabled = self.el_enabled;
        Ok(t)
    }

    /// The same target with a smooth surrogate in place of a non-smooth
    /// constraint model; shares data and the evaluation counter.
    pub fn smooth_surrogate(&self) -> Option<Target> {
        if self.model.smooth() {
            return Some(self.clone());
        }
        let model = self.model.smooth_surrogate()?;
        Some(Target { model, ..self.clone() })
    }

    /// Laplace approximation, computed on the smooth surrogate when the
    /// constraint is not differentiable.
    pub fn laplace_or_surrogate(&self) -> Result<LaplaceResult> {
        self.smooth_surrogate()
            .ok_or_else(|| Error::NonDifferentiable(self.model.name().to_string()))?
            .laplace()
    }

    pub fn model(&self) -> &SharedModel {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn prior(&self) -> &NaturalGaussian {
        &self.prior
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn el_enabled(&self) -> bool {
        self.el_enabled
    }

    /// Number of EL solves performed through this target (shared by clones).
    pub fn el_evals(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    /// Counts an EL solve made outside [`Target::evaluation`].
    pub(crate) fn count_evaluation(&self) {
        self.evals.fetch_add(1, Ordering::Relaxed);
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), got: theta.len() });
        }
        Ok(())
    }

    /// EL evaluation at `theta`, counted.
    pub fn evaluation(&self, theta: &DVector<f64>) -> Result<ELEvaluation> {
        self.check(theta)?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        elcore::eval_el(self.model.as_ref(), &self.data, theta.as_slice())
    }

    pub fn el_gradient(&self, theta: &DVector<f64>, ev: &ELEvaluation) -> Result<ELGradient> {
        elcore::el_gradient(self.model.as_ref(), &self.data, theta.as_slice(), ev)
    }

    /// `log p(theta) + log EL(theta)` up to a constant; `-inf` out of support.
    pub fn log_post(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check(theta)?;
        let prior = self.prior.log_pdf(theta)?;
        if !self.el_enabled {
            return Ok(prior);
        }
        Ok(prior + self.evaluation(theta)?.log_el)
    }

    pub fn log_post_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check(theta)?;
        let prior = self.prior.log_pdf(theta)?;
        let prior_grad = self.prior.grad_log_kernel(theta);
        if !self.el_enabled {
            return Ok((prior, prior_grad));
        }
        let ev = self.evaluation(theta)?;
        if !ev.in_support {
            return Err(Error::OutOfSupport);
        }
        let g = self.el_gradient(theta, &ev)?;
        Ok((prior + ev.log_el, prior_grad + g.grad_log_el))
    }

    pub fn grad_log_post(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.log_post_and_grad(theta).map(|(_, g)| g)
    }

    /// Prior Hessian plus central differences of the analytic EL gradient.
    pub fn hess_log_post(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.hess_log_post_with_step(theta, None)
    }

    pub fn hess_log_post_with_step(&self, theta: &DVector<f64>, step: Option<f64>) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        if !self.el_enabled {
            return Ok(-self.prior.q());
        }
        let el = linalg::fd_hessian(theta, step, |probe| {
            let ev = self.evaluation(probe)?;
            if !ev.in_support {
                return Err(Error::SupportBoundary { step: step.unwrap_or_else(|| linalg::fd_step(probe.amax())) });
            }
            Ok(self.el_gradient(probe, &ev)?.grad_log_el)
        })?;
        Ok(el - self.prior.q())
    }

    /// Solves `sum h(z_i, theta) = 0` by Gauss-Newton from the origin
    /// (ordinary least squares for linear regression). Step lengths are capped
    /// by an adaptive trust radius and steps that do not shrink the residual
    /// are halved, so saturating scores cannot send the iterate away.
    /// Non-smooth models use their smooth surrogate.
    pub fn estimating_equation_start(&self) -> Result<DVector<f64>> {
        let model = if self.model.smooth() {
            self.model.clone()
        } else {
            self.model
                .smooth_surrogate()
                .ok_or_else(|| Error::NonDifferentiable(self.model.name().to_string()))?
        };
        let (k, p) = (model.k(), model.p());
        let residual = |theta: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(models::h_matrix(model.as_ref(), &self.data, theta.as_slice())?.row_sum().transpose())
        };
        let mut theta = DVector::zeros(p);
        let mut radius: f64 = 1.0;
        for _ in 0..200 {
            let f = residual(&theta)?;
            let jac = models::jacobians_flat(model.as_ref(), &self.data, theta.as_slice())?;
            let mut j = DMatrix::zeros(k, p);
            for chunk in jac.chunks(k * p) {
                j += DMatrix::from_row_slice(k, p, chunk);
            }
            let normal = j.tr_mul(&j);
            let rhs = -j.tr_mul(&f);
            let (normal, _) = linalg::ridge_repair(&normal, 1e-12);
            let mut delta = linalg::cholesky(&normal).ok_or(Error::DegenerateSpan)?.solve(&rhs);
            let f_norm = f.norm();
            let mut accepted = false;
            for _ in 0..60 {
                let len = delta.norm();
                if len > radius {
                    delta *= radius / len;
                }
                if residual(&(&theta + &delta))?.norm() < f_norm {
                    radius = radius.max(2.0 * delta.norm());
                    accepted = true;
                    break;
                }
                radius = 0.5 * delta.norm();
            }
            if !accepted {
                break;
            }
            theta += &delta;
            if delta.norm() <= 1e-12 * (1.0 + theta.norm()) {
                break;
            }
        }
        Ok(theta)
    }

    /// MAP by damped Newton with the default start and tolerances.
    pub fn laplace(&self) -> Result<LaplaceResult> {
        self.map_newton(None, 1e-8, 200)
    }

    /// Damped Newton on `-log_post`. Steps that leave the support are halved;
    /// a non-PD negative Hessian is repaired with a doubling ridge.
    pub fn map_newton(&self, theta0: Option<&DVector<f64>>, tol: f64, max_iter: usize) -> Result<LaplaceResult> {
        let start = Instant::now();
        let mut theta = match theta0 {
            Some(t) => t.clone(),
            None => self.estimating_equation_start()?,
        };
        self.check(&theta)?;
        let (mut value, mut grad) = self.log_post_and_grad(&theta)?;
        let scale = 1.0 + grad.norm();
        let mut iters = 0;
        let mut converged = false;
        while iters < max_iter {
            if grad.norm() <= tol * scale {
                converged = true;
                break;
            }
            iters += 1;
            let neg_hess = match self.hess_log_post(&theta) {
                Ok(h) => -h,
                Err(Error::SupportBoundary { .. }) => self.prior.q().clone_owned(),
                Err(e) => return Err(e),
            };
            let (neg_hess, _) = linalg::ridge_repair(&neg_hess, 1e-6);
            let dir = linalg::cholesky(&neg_hess).ok_or(Error::ImproperGaussian)?.solve(&grad);
            let slope = grad.dot(&dir);
            if 0.5 * slope <= linalg::VALUE_RESOLUTION * (1.0 + value.abs()) {
                // the predicted gain is below what the objective can resolve, so a
                // line search on values is noise; take the plain Newton step
                let trial = &theta + &dir;
                match self.log_post_and_grad(&trial) {
                    Ok((v, g)) if g.norm() < grad.norm() => {
                        theta = trial;
                        value = v;
                        grad = g;
                        continue;
                    }
                    Ok(_) | Err(Error::OutOfSupport) => break,
                    Err(e) => return Err(e),
                }
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-12 {
                let trial = &theta + &dir * step;
                match self.log_post_and_grad(&trial) {
                    Ok((v, g)) if v >= value + 1e-4 * step * slope => {
                        theta = trial;
                        value = v;
                        grad = g;
                        moved = true;
                        break;
                    }
                    Ok(_) | Err(Error::OutOfSupport) => step *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            if !moved {
                converged = grad.norm() <= tol * scale;
                break;
            }
        }
        if !converged && grad.norm() <= tol * scale {
            converged = true;
        }
        let neg_hess = match self.hess_log_post(&theta) {
            Ok(h) => -h,
            Err(Error::SupportBoundary { .. }) => {
                converged = false;
                self.prior.q().clone_owned()
            }
            Err(e) => return Err(e),
        };
        let precision = if linalg::is_pd(&neg_hess) {
            neg_hess
        } else {
            converged = false;
            linalg::ridge_repair(&neg_hess, 1e-6).0
        };
        let approx = NaturalGaussian::new(&precision * &theta, precision)?;
        Ok(LaplaceResult {
            mode: theta,
            approx,
            newton_iters: iters,
            converged,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

impl LogDensity for Target {
    fn dim(&self) -> usize {
        self.p()
    }

    fn log_density(&self, theta: &DVector<f64>) -> Result<f64> {
        self.log_post(theta)
    }

    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if !self.model.smooth() && self.el_enabled {
            return Err(Error::NonDifferentiable(self.model.name().to_string()));
        }
        self.log_post_and_grad(theta)
    }

    fn smooth(&self) -> bool {
        self.model.smooth() || !self.el_enabled
    }
}

/// MAP and the Gaussian with precision equal to the negative Hessian there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LaplaceRepr", into = "LaplaceRepr")]
pub struct LaplaceResult {
    pub mode: DVector<f64>,
    pub approx: NaturalGaussian,
    pub newton_iters: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct LaplaceRepr {
    mode: Vec<f64>,
    r: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    converged: bool,
    iters: usize,
    seconds: f64,
}

impl From<LaplaceResult> for LaplaceRepr {
    fn from(l: LaplaceResult) -> Self {
        Self {
            mode: l.mode.iter().copied().collect(),
            r: l.approx.r().iter().copied().collect(),
            q: matrix_rows(l.approx.q()),
            converged: l.converged,
            iters: l.newton_iters,
            seconds: l.seconds,
        }
    }
}

impl TryFrom<LaplaceRepr> for LaplaceResult {
    type Error = Error;

    fn try_from(repr: LaplaceRepr) -> Result<Self> {
        let p = repr.r.len();
        let q = matrix_from_rows(&repr.q, p)?;
        Ok(Self {
            mode: DVector::from_vec(repr.mode),
            approx: NaturalGaussian::new(DVector::from_vec(repr.r), q)?,
            newton_iters: repr.iters,
            converged: repr.converged,
            seconds: repr.seconds,
        })
    }
}
