//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative change in an objective value below which line searches stop
/// being informative.
pub const VALUE_RESOLUTION: f64 = 1e-13;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization, `None` when the matrix is not positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

pub fn is_pd(m: &DMatrix<f64>) -> bool {
    cholesky(m).is_some()
}

/// Adds `tau * I` with `tau` doubling from `start` until the result factorizes.
/// Returns the repaired matrix and the ridge used (0 when none was needed).
pub fn ridge_repair(m: &DMatrix<f64>, start: f64) -> (DMatrix<f64>, f64) {
    if is_pd(m) {
        return (m.clone(), 0.0);
    }
    let scale = m.diagonal().iter().fold(1.0f64, |a, d| a.max(d.abs()));
    let mut tau = start * scale;
    loop {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += tau;
        }
        if is_pd(&shifted) || !tau.is_finite() {
            return (shifted, tau);
        }
        tau *= 2.0;
    }
}

/// Default central-difference step for coordinate `x`: cbrt(eps) * (1 + |x|).
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// Symmetrized central-difference Jacobian of a gradient map, i.e. a Hessian.
/// `step` overrides the per-coordinate default when given.
pub fn fd_hessian<E>(
    x: &DVector<f64>,
    step: Option<f64>,
    mut grad: impl FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
) -> Result<DMatrix<f64>, E> {
    let p = x.len();
    let mut h = DMatrix::zeros(p, p);
    let mut probe = x.clone();
    for j in 0..p {
        let s = step.unwrap_or_else(|| fd_step(x[j]));
        probe[j] = x[j] + s;
        let up = grad(&probe)?;
        probe[j] = x[j] - s;
        let down = grad(&probe)?;
        probe[j] = x[j];
        h.set_column(j, &((up - down) / (2.0 * s)));
    }
    Ok(symmetrize(&h))
}

/// Log-determinant from a Cholesky factor.
pub fn chol_logdet(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
