//! Posterior factors handled as EP sites.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::NaturalGaussian;
use crate::linalg;
use crate::posterior::Target;

/// One factor of the posterior product, in log space.
pub trait SiteFactor: Send + Sync {
    fn dim(&self) -> usize;

    /// `log` of the factor; `-inf` where it vanishes.
    fn log_factor(&self, theta: &DVector<f64>) -> Result<f64>;

    /// Value and gradient; `OutOfSupport` where the factor vanishes.
    fn grad_log_factor(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)>;

    /// Hessian of the log factor; central differences of the gradient by default.
    fn hess_log_factor(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        linalg::fd_hessian(theta, None, |probe| {
            self.grad_log_factor(probe).map(|(_, g)| g).map_err(|e| match e {
                Error::OutOfSupport => Error::SupportBoundary { step: linalg::fd_step(probe.amax()) },
                other => other,
            })
        })
    }

    /// Whether derivatives exist.
    fn smooth(&self) -> bool;

    /// A factor identically equal to one (an empty pool).
    fn is_constant(&self) -> bool {
        false
    }
}

/// A Gaussian factor, possibly improper: the prior, or a quadratic pseudo-site.
#[derive(Debug, Clone)]
pub struct GaussianSite {
    factor: NaturalGaussian,
}

impl GaussianSite {
    pub fn new(factor: NaturalGaussian) -> Self {
        Self { factor }
    }
}

impl SiteFactor for GaussianSite {
    fn dim(&self) -> usize {
        self.factor.dim()
    }

    fn log_factor(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.factor.log_kernel(theta))
    }

    fn grad_log_factor(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.factor.log_kernel(theta), self.factor.grad_log_kernel(theta)))
    }

    fn hess_log_factor(&self, _theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-self.factor.q())
    }

    fn smooth(&self) -> bool {
        true
    }

    fn is_constant(&self) -> bool {
        self.factor.r().iter().all(|v| *v == 0.0) && self.factor.q().iter().all(|v| *v == 0.0)
    }
}

/// The product of EL weights `w_i(theta)` over a contiguous block of records,
/// optionally times the prior. Each evaluation solves the full EL problem,
/// since every weight depends on all records through the multiplier.
#[derive(Debug, Clone)]
pub struct ElBlockSite {
    target: Target,
    rows: Range<usize>,
    include_prior: bool,
}

impl ElBlockSite {
    pub fn new(target: Target, rows: Range<usize>, include_prior: bool) -> Self {
        Self { target, rows, include_prior }
    }

    pub fn rows(&self) -> Range<usize> {
        self.rows.clone()
    }
}

impl SiteFactor for ElBlockSite {
    fn dim(&self) -> usize {
        self.target.p()
    }

    fn log_factor(&self, theta: &DVector<f64>) -> Result<f64> {
        let prior = if self.include_prior { self.target.prior().log_kernel(theta) } else { 0.0 };
        if self.rows.is_empty() {
            return Ok(prior);
        }
        let ev = self.target.evaluation(theta)?;
        if !ev.in_support {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(prior + self.rows.clone().map(|i| ev.weights[i].ln()).sum::<f64>())
    }

    fn grad_log_factor(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (mut value, mut grad) = if self.include_prior {
            let prior = self.target.prior();
            (prior.log_kernel(theta), prior.grad_log_kernel(theta))
        } else {
            (0.0, DVector::zeros(self.dim()))
        };
        if self.rows.is_empty() {
            return Ok((value, grad));
        }
        if !self.target.model().smooth() {
            return Err(Error::NonDifferentiable(self.target.model().name().to_string()));
        }
        let ev = self.target.evaluation(theta)?;
        if !ev.in_support {
            return Err(Error::OutOfSupport);
        }
        let g = self.target.el_gradient(theta, &ev)?;
        for i in self.rows.clone() {
            value += ev.weights[i].ln();
            grad += g.grad_log_w.row(i).transpose();
        }
        Ok((value, grad))
    }

    fn smooth(&self) -> bool {
        self.rows.is_empty() || self.target.model().smooth()
    }

    fn is_constant(&self) -> bool {
        self.rows.is_empty() && !self.include_prior
    }
}

/// Splits `0..n` into `blocks` contiguous ranges whose sizes differ by at most one.
pub fn block_ranges(n: usize, blocks: usize) -> Vec<Range<usize>> {
    let base = n / blocks;
    let extra = n % blocks;
    let mut start = 0;
    (0..blocks)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// The prior as site 0 and the records split into `num_sites - 1` blocks.
/// A single site holds the prior and all records.
pub fn pool_sites(target: &Target, num_sites: usize) -> Result<Vec<Box<dyn SiteFactor>>> {
    let n = target.data().n();
    if num_sites == 0 || num_sites > n + 1 {
        return Err(Error::InvalidInput(format!("need 1 <= sites <= n + 1 = {}, got {num_sites}", n + 1)));
    }
    if num_sites == 1 {
        return Ok(vec![Box::new(ElBlockSite::new(target.clone(), 0..n, true))]);
    }
    let mut sites: Vec<Box<dyn SiteFactor>> = vec![Box::new(GaussianSite::new(target.prior().clone()))];
    for rows in block_ranges(n, num_sites - 1) {
        sites.push(Box::new(ElBlockSite::new(target.clone(), rows, false)));
    }
    Ok(sites)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_everything_evenly() {
        let r = block_ranges(100, 5);
        assert_eq!(r, vec![0..20, 20..40, 40..60, 60..80, 80..100]);
        let r = block_ranges(10, 3);
        assert_eq!(r, vec![0..4, 4..7, 7..10]);
        assert_eq!(block_ranges(81, 3).iter().map(|r| r.len()).collect::<Vec<_>>(), vec![27, 27, 27]);
    }
}
