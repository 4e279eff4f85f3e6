use std::sync::Arc;

use super::linear::expit;
use super::{ConstraintModel, SharedModel};
use crate::error::{Error, Result};

/// Quantile score: `1 - tau` below zero, `-tau` above, `0` at zero.
pub fn rho_step(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else if u > 0.0 {
        -tau
    } else {
        0.0
    }
}

/// Smooth score `expit(-u / eps) - tau`.
pub fn rho_smooth(u: f64, tau: f64, eps: f64) -> f64 {
    expit(-u / eps) - tau
}

/// Quantile-regression constraint `h = rho(y - x'theta) x`; layout `(y, x_1..x_p)`.
///
/// With `smooth = false` the step score is used and the model has no Jacobian.
#[derive(Debug, Clone)]
pub struct QuantileRegression {
    p: usize,
    tau: f64,
    eps: f64,
    smooth: bool,
}

impl QuantileRegression {
    pub fn new(p: usize, tau: f64, eps: f64, smooth: bool) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!("quantile level {tau} outside (0, 1)")));
        }
        if smooth && !(eps > 0.0) {
            return Err(Error::InvalidInput("smoothing width must be positive".into()));
        }
        Ok(Self { p, tau, eps, smooth })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn rho(&self, u: f64) -> f64 {
        if self.smooth {
            rho_smooth(u, self.tau, self.eps)
        } else {
            rho_step(u, self.tau)
        }
    }
}

impl ConstraintModel for QuantileRegression {
    fn name(&self) -> &str {
        if self.smooth {
            "quantile-smooth"
        } else {
            "quantile"
        }
    }

    fn k(&self) -> usize {
        self.p
    }

    fn p(&self) -> usize {
        self.p
    }

    fn width(&self) -> usize {
        self.p + 1
    }

    fn smooth(&self) -> bool {
        self.smooth
    }

    fn h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (y, x) = (z[0], &z[1..]);
        let u = y - x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        let rho = self.rho(u);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = rho * xi;
        }
    }

    fn jac_h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.smooth {
            return Err(Error::NonDifferentiable(self.name().to_string()));
        }
        let (y, x) = (z[0], &z[1..]);
        let u = y - x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        let s = expit(-u / self.eps);
        // d rho / d theta = (s (1 - s) / eps) x
        let slope = s * (1.0 - s) / self.eps;
        let p = self.p;
        for r in 0..p {
            for c in 0..p {
                out[r * p + c] = slope * x[r] * x[c];
            }
        }
        Ok(())
    }

    fn smooth_surrogate(&self) -> Option<SharedModel> {
        if self.smooth {
            None
        } else {
            Some(Arc::new(Self { smooth: true, ..self.clone() }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::jacobian_fd_error;
    use rand::{Rng, SeedableRng};

    #[test]
    fn step_score_cases() {
        assert!((rho_step(-1.0, 0.7) - 0.3).abs() < 1e-15);
        assert_eq!(rho_step(1.0, 0.7), -0.7);
        assert_eq!(rho_step(0.0, 0.7), 0.0);
        assert!((rho_smooth(0.0, 0.7, 0.1) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn smooth_score_is_close_away_from_zero() {
        // |expit(-u/0.1) - step| <= 0.01 once |u| >= 0.1 * ln(99) ~ 0.4595
        let threshold = 0.1 * 99f64.ln();
        assert!(threshold < 0.46);
        for i in 0..2000 {
            let u = 0.46 + i as f64 * 0.01;
            for s in [u, -u] {
                assert!((rho_smooth(s, 0.7, 0.1) - rho_step(s, 0.7)).abs() <= 0.01);
            }
        }
        // tail bound exp(-|u|/eps) for |u| >= 10 eps
        for eps in [0.5, 0.1, 0.01] {
            for i in 0..500 {
                let u = 10.0 * eps * (1.0 + i as f64 * 0.05);
                for s in [u, -u] {
                    let gap = (rho_smooth(s, 0.3, eps) - rho_step(s, 0.3)).abs();
                    // the subtraction itself rounds at the 1e-16 level
                    assert!(gap <= (-u / eps).exp() + 4.0 * f64::EPSILON);
                }
            }
        }
    }

    #[test]
    fn non_smooth_variant_has_no_jacobian() {
        let m = QuantileRegression::new(2, 0.7, 0.1, false).unwrap();
        let mut out = [0.0; 4];
        assert!(matches!(m.jac_h(&[0.0, 1.0, 1.0], &[0.0, 0.0], &mut out), Err(Error::NonDifferentiable(_))));
        assert!(m.smooth_surrogate().unwrap().smooth());
        assert!(QuantileRegression::new(2, 1.2, 0.1, false).is_err());
        assert!(QuantileRegression::new(2, 0.5, 0.0, true).is_err());
    }

    #[test]
    fn smooth_jacobian_matches_finite_differences() {
        let m = QuantileRegression::new(2, 0.7, 0.1, true).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let z = [rng.random_range(-2.0..2.0), 1.0, rng.random_range(-2.0..2.0)];
            let t = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!(jacobian_fd_error(&m, &z, &t) < 1e-6);
        }
    }
}
