use super::ConstraintModel;
use crate::error::Result;

/// Quadratic-inference-function constraints for a bivariate repeated-measures
/// model: `h = [x M1 r; x M2 r]` with `r = y - x'theta`, `M1 = I2` and `M2`
/// the unit compound-symmetry matrix with off-diagonal `rho`.
///
/// Record layout: `(y1, y2, x_{1,1..p}, x_{2,1..p})`, i.e. the responses and
/// then one p-vector of covariates per time point.
#[derive(Debug, Clone)]
pub struct GeeModel {
    p: usize,
    rho: f64,
}

impl GeeModel {
    pub fn new(p: usize, rho: f64) -> Self {
        Self { p, rho }
    }

    fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let p = self.p;
        (&z[..2], &z[2..2 + p], &z[2 + p..2 + 2 * p])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ConstraintModel for GeeModel {
    fn name(&self) -> &str {
        "gee"
    }

    fn k(&self) -> usize {
        2 * self.p
    }

    fn p(&self) -> usize {
        self.p
    }

    fn width(&self) -> usize {
        2 + 2 * self.p
    }

    fn smooth(&self) -> bool {
        true
    }

    fn h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (y, x1, x2) = self.split(z);
        let r = [y[0] - dot(x1, theta), y[1] - dot(x2, theta)];
        let m2r = [r[0] + self.rho * r[1], self.rho * r[0] + r[1]];
        let p = self.p;
        for j in 0..p {
            out[j] = x1[j] * r[0] + x2[j] * r[1];
            out[p + j] = x1[j] * m2r[0] + x2[j] * m2r[1];
        }
    }

    fn jac_h(&self, z: &[f64], _theta: &[f64], out: &mut [f64]) -> Result<()> {
        let (_, x1, x2) = self.split(z);
        let p = self.p;
        // block 1: -(x1 x1' + x2 x2'); block 2: -(x M2 x')
        for a in 0..p {
            for b in 0..p {
                let s1 = x1[a] * x1[b] + x2[a] * x2[b];
                let cross = x1[a] * x2[b] + x2[a] * x1[b];
                out[a * p + b] = -s1;
                out[(p + a) * p + b] = -(s1 + self.rho * cross);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::jacobian_fd_error;
    use rand::{Rng, SeedableRng};

    fn record(y: [f64; 2], x1: &[f64], x2: &[f64]) -> Vec<f64> {
        let mut z = y.to_vec();
        z.extend_from_slice(x1);
        z.extend_from_slice(x2);
        z
    }

    #[test]
    fn zero_residual_gives_zero() {
        let m = GeeModel::new(5, 0.7);
        let theta = [3.0, 1.5, 0.0, 0.0, 2.0];
        let x1 = [0.2, -1.0, 0.3, 0.4, 1.1];
        let x2 = [-0.5, 0.1, 0.9, -0.2, 0.6];
        let z = record([dot(&x1, &theta), dot(&x2, &theta)], &x1, &x2);
        let mut out = [1.0; 10];
        m.h(&z, &theta, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn compound_symmetry_eigenvector() {
        // r proportional to (1, 1) => M2 r = 1.7 r, so block 2 = 1.7 * block 1
        let m = GeeModel::new(2, 0.7);
        let z = record([1.0, 1.0], &[1.0, 2.0], &[-0.5, 3.0]);
        let mut out = [0.0; 4];
        m.h(&z, &[0.0, 0.0], &mut out);
        assert!((out[2] - 1.7 * out[0]).abs() < 1e-14);
        assert!((out[3] - 1.7 * out[1]).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = GeeModel::new(5, 0.7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let z: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(jacobian_fd_error(&m, &z, &t) < 1e-6);
        }
    }
}
