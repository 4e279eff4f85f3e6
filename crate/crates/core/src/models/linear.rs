use super::ConstraintModel;
use crate::error::Result;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Orthogonality constraint `h = x (y - x'theta)`; record layout `(y, x_1..x_p)`.
#[derive(Debug, Clone)]
pub struct LinearRegression {
    p: usize,
}

impl LinearRegression {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "linear regression needs p >= 1");
        Self { p }
    }
}

impl ConstraintModel for LinearRegression {
    fn name(&self) -> &str {
        "linreg"
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
        true
    }

    fn h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (y, x) = (z[0], &z[1..]);
        let resid = y - dot(x, theta);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi * resid;
        }
    }

    fn jac_h(&self, z: &[f64], _theta: &[f64], out: &mut [f64]) -> Result<()> {
        let x = &z[1..];
        let p = self.p;
        for r in 0..p {
            for c in 0..p {
                out[r * p + c] = -x[r] * x[c];
            }
        }
        Ok(())
    }
}

/// Logistic score constraint `h = x (y - expit(x'theta))`; layout `(y, x_1..x_p)`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    p: usize,
}

impl LogisticRegression {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "logistic regression needs p >= 1");
        Self { p }
    }
}

impl ConstraintModel for LogisticRegression {
    fn name(&self) -> &str {
        "logistic"
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
        true
    }

    fn h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        let (y, x) = (z[0], &z[1..]);
        let resid = y - expit(dot(x, theta));
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi * resid;
        }
    }

    fn jac_h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        let x = &z[1..];
        let s = expit(dot(x, theta));
        let slope = s * (1.0 - s);
        let p = self.p;
        for r in 0..p {
            for c in 0..p {
                out[r * p + c] = -slope * x[r] * x[c];
            }
        }
        Ok(())
    }
}
