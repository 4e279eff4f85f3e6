//! Moments of the tilted distribution `cavity(theta) * site(theta)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::sites::SiteFactor;
use crate::error::{Error, Result};
use crate::gaussian::{MomentGaussian, NaturalGaussian};
use crate::linalg;

/// Gradient-norm tolerance of the tilted-mode Newton iteration.
pub const MODE_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;

/// Laplace approximation of the tilted distribution: the mode found by Newton
/// from the cavity mean, with covariance the inverse negative Hessian there.
pub fn tilted_laplace(site: &dyn SiteFactor, cavity: &NaturalGaussian) -> Result<MomentGaussian> {
    let cav_moments = cavity.to_moments()?;
    if site.is_constant() {
        return Ok(cav_moments);
    }
    let fail = |why: &str| Error::LaplaceFailed(why.to_string());
    let objective = |theta: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (v, g) = site.grad_log_factor(theta)?;
        Ok((v + cavity.log_kernel(theta), g + cavity.grad_log_kernel(theta)))
    };
    let neg_hessian = |theta: &DVector<f64>| -> Result<DMatrix<f64>> {
        Ok(cavity.q() - site.hess_log_factor(theta)?)
    };

    let mut theta = cav_moments.mu;
    let (mut value, mut grad) = match objective(&theta) {
        Ok(vg) => vg,
        Err(Error::OutOfSupport) => return Err(fail("cavity mean outside the support")),
        Err(e) => return Err(e),
    };
    let mut converged = false;
    for _ in 0..MAX_NEWTON {
        if grad.norm() <= MODE_TOL {
            converged = true;
            break;
        }
        let h = match neg_hessian(&theta) {
            Ok(h) => h,
            Err(Error::SupportBoundary { .. }) => return Err(fail("support boundary inside the Hessian stencil")),
            Err(e) => return Err(e),
        };
        let (h, _) = linalg::ridge_repair(&h, 1e-6);
        let dir = linalg::cholesky(&h).ok_or_else(|| fail("Newton system not factorizable"))?.solve(&grad);
        let slope = grad.dot(&dir);
        if 0.5 * slope <= linalg::VALUE_RESOLUTION * (1.0 + value.abs()) {
            // the predicted gain is below what the objective can resolve, so a
            // line search on values is noise; take the plain Newton step
            let trial = &theta + &dir;
            match objective(&trial) {
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
            match objective(&trial) {
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
            // no further ascent is representable; accept when the gradient is at its noise floor
            converged = grad.norm() <= MODE_TOL * (1.0 + value.abs());
            break;
        }
    }
    if !converged && grad.norm() > MODE_TOL {
        return Err(fail("Newton did not converge"));
    }
    let h = match neg_hessian(&theta) {
        Ok(h) => h,
        Err(Error::SupportBoundary { .. }) => return Err(fail("support boundary at the mode")),
        Err(e) => return Err(e),
    };
    let ch = linalg::cholesky(&h).ok_or_else(|| fail("negative Hessian not positive definite"))?;
    MomentGaussian::new(theta, linalg::symmetrize(&ch.inverse()))
}

/// Self-normalized importance-sampling moments of the tilted distribution
/// with weights `cavity * site / proposal`, plus the effective sample size.
/// Draws outside the support get weight zero. The covariance is formed from
/// the R factor of the weighted, centred scatter matrix.
pub fn tilted_is<R: Rng + ?Sized>(
    site: &dyn SiteFactor,
    cavity: &NaturalGaussian,
    proposal: &NaturalGaussian,
    samples: usize,
    rng: &mut R,
) -> Result<(MomentGaussian, f64)> {
    if samples < 2 {
        return Err(Error::InvalidInput("importance sampling needs at least two draws".into()));
    }
    let draws = proposal.sample_with(samples, rng)?;
    let p = draws.ncols();
    let mut log_w = Vec::with_capacity(samples);
    for row in draws.row_iter() {
        let theta = row.transpose();
        let site_value = site.log_factor(&theta)?;
        let lw = cavity.log_kernel(&theta) + site_value - proposal.log_kernel(&theta);
        log_w.push(if lw.is_nan() { f64::NEG_INFINITY } else { lw });
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DisjointProposal);
    }
    let xi: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = xi.iter().sum();
    let ess = total * total / xi.iter().map(|x| x * x).sum::<f64>();

    let mut mu = DVector::zeros(p);
    for (l, row) in draws.row_iter().enumerate() {
        if xi[l] > 0.0 {
            mu += row.transpose() * xi[l];
        }
    }
    mu /= total;

    let mut scatter = DMatrix::zeros(samples, p);
    for (l, row) in draws.row_iter().enumerate() {
        let s = xi[l].sqrt();
        for j in 0..p {
            scatter[(l, j)] = s * (row[j] - mu[j]);
        }
    }
    let r = scatter.qr().r();
    let sigma = r.tr_mul(&r) / total;
    Ok((MomentGaussian::new(mu, sigma)?, ess))
}
