//! Moment-constraint models and the datasets they are fitted to.
//!
//! A model maps one observation `z` and a parameter `theta` to `h(z, theta)`
//! in `R^K`, optionally with its `K x p` Jacobian. Observations are flat rows
//! of a [`Dataset`] whose layout (responses first, then covariates) is fixed
//! per model.

mod data;
mod gee;
mod linear;
mod quantile;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use data::{generate, kyphosis, linreg_with_n, load_kyphosis, Dataset, DatasetMeta, Experiment};
pub use gee::GeeModel;
pub use linear::{LinearRegression, LogisticRegression};
pub use quantile::{rho_smooth, rho_step, QuantileRegression};

pub type SharedModel = Arc<dyn ConstraintModel>;

/// Moment constraint `h: Z x Theta -> R^K`.
pub trait ConstraintModel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;

    /// Constraint dimension K.
    fn k(&self) -> usize;

    /// Parameter dimension p.
    fn p(&self) -> usize;

    /// Number of values in one observation record.
    fn width(&self) -> usize;

    /// Whether `jac_h` is available and continuous.
    fn smooth(&self) -> bool;

    /// Writes `h(z, theta)` into `out` (length K).
    fn h(&self, z: &[f64], theta: &[f64], out: &mut [f64]);

    /// Writes the K x p Jacobian of `h` in row-major order into `out`.
    fn jac_h(&self, z: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()>;

    /// A differentiable stand-in used to initialize non-smooth models.
    fn smooth_surrogate(&self) -> Option<SharedModel> {
        None
    }
}

fn check_dims(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64]) -> Result<()> {
    if theta.len() != model.p() {
        return Err(Error::DimensionMismatch { expected: model.p(), got: theta.len() });
    }
    if data.width() != model.width() {
        return Err(Error::DimensionMismatch { expected: model.width(), got: data.width() });
    }
    Ok(())
}

/// Stacks `h(z_i, theta)` into an n x K matrix.
pub fn h_matrix(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_dims(model, data, theta)?;
    let k = model.k();
    let mut row = vec![0.0; k];
    let mut h = DMatrix::zeros(data.n(), k);
    for i in 0..data.n() {
        model.h(data.row(i), theta, &mut row);
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite h at observation {i}")));
            }
            h[(i, j)] = *v;
        }
    }
    Ok(h)
}

/// Per-observation Jacobians, each K x p.
pub fn jacobians(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    check_dims(model, data, theta)?;
    let (k, p) = (model.k(), model.p());
    let mut buf = vec![0.0; k * p];
    (0..data.n())
        .map(|i| {
            model.jac_h(data.row(i), theta, &mut buf)?;
            Ok(DMatrix::from_row_slice(k, p, &buf))
        })
        .collect()
}

/// Looks up a model by the name used in configs and on the command line.
pub fn model_by_name(name: &str, p: usize) -> Result<SharedModel> {
    Ok(match name {
        "linreg" => Arc::new(LinearRegression::new(p)),
        "logistic" => Arc::new(LogisticRegression::new(p)),
        "quantile" => Arc::new(QuantileRegression::new(p, 0.7, 0.1, false)?),
        "quantile-smooth" => Arc::new(QuantileRegression::new(p, 0.7, 0.1, true)?),
        "gee" => Arc::new(GeeModel::new(p, 0.7)),
        other => return Err(Error::InvalidInput(format!("unknown model `{other}`"))),
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Max relative deviation of `jac_h` from central differences of `h`.
    pub fn jacobian_fd_error(model: &dyn ConstraintModel, z: &[f64], theta: &[f64]) -> f64 {
        let (k, p) = (model.k(), model.p());
        let mut jac = vec![0.0; k * p];
        model.jac_h(z, theta, &mut jac).unwrap();
        let mut up = vec![0.0; k];
        let mut down = vec![0.0; k];
        let mut worst: f64 = 0.0;
        for j in 0..p {
            let s = 1e-6 * (1.0 + theta[j].abs());
            let mut t = theta.to_vec();
            t[j] += s;
            model.h(z, &t, &mut up);
            t[j] -= 2.0 * s;
            model.h(z, &t, &mut down);
            for r in 0..k {
                let fd = (up[r] - down[r]) / (2.0 * s);
                let err = (fd - jac[r * p + j]).abs() / (1.0 + jac[r * p + j].abs());
                worst = worst.max(err);
            }
        }
        worst
    }
}

/// Per-observation Jacobians flattened: record i occupies `[i*K*p, (i+1)*K*p)`, row-major.
pub fn jacobians_flat(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
    check_dims(model, data, theta)?;
    let kp = model.k() * model.p();
    let mut out = vec![0.0; data.n() * kp];
    for (i, chunk) in out.chunks_mut(kp).enumerate() {
        model.jac_h(data.row(i), theta, chunk)?;
    }
    Ok(out)
}
