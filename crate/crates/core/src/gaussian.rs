//! Multivariate Gaussians in natural parameters.
//!
//! A [`NaturalGaussian`] stores the linear shift `r` and the precision `Q`, so
//! products and quotients of densities are sums and differences of parameters.
//! Site approximations may be improper (indefinite `Q`); only the operations
//! that need a normalized density (`to_moments`, `log_pdf`, `sample`) check.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, cholesky, symmetrize};
use crate::rng;
use crate::samples::SampleMatrix;

/// Gaussian in natural parameters `(r, Q)`; `Q` is kept symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NaturalRepr", into = "NaturalRepr")]
pub struct NaturalGaussian {
    r: DVector<f64>,
    q: DMatrix<f64>,
}

/// Gaussian in moment form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentRepr", into = "MomentRepr")]
pub struct MomentGaussian {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

fn check_square(m: &DMatrix<f64>, p: usize) -> Result<()> {
    if m.nrows() != p {
        return Err(Error::DimensionMismatch { expected: p, got: m.nrows() });
    }
    if m.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: m.ncols() });
    }
    Ok(())
}

impl NaturalGaussian {
    pub fn new(r: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        check_square(&q, r.len())?;
        Ok(Self { r, q: symmetrize(&q) })
    }

    /// The identity element `(0, 0)`.
    pub fn zeros(p: usize) -> Self {
        Self { r: DVector::zeros(p), q: DMatrix::zeros(p, p) }
    }

    /// `N(mean, var * I)`.
    pub fn isotropic(mean: &DVector<f64>, var: f64) -> Self {
        let p = mean.len();
        let q = DMatrix::identity(p, p) / var;
        Self { r: &q * mean, q }
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }

    /// Density product: natural parameters add.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        Ok(Self { r: &self.r + &other.r, q: symmetrize(&(&self.q + &other.q)) })
    }

    /// Density quotient: natural parameters subtract.
    pub fn quotient(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        Ok(Self { r: &self.r - &other.r, q: symmetrize(&(&self.q - &other.q)) })
    }

    /// Raises the density to `power` (scales both natural parameters).
    pub fn scale(&self, power: f64) -> Self {
        Self { r: &self.r * power, q: &self.q * power }
    }

    pub fn is_proper(&self) -> bool {
        cholesky(&self.q).is_some()
    }

    /// Euclidean norm of the stacked natural parameter `(r, vec Q)`.
    pub fn norm(&self) -> f64 {
        (self.r.norm_squared() + self.q.norm_squared()).sqrt()
    }

    pub fn to_moments(&self) -> Result<MomentGaussian> {
        let ch = cholesky(&self.q).ok_or(Error::ImproperGaussian)?;
        let mu = ch.solve(&self.r);
        let sigma = symmetrize(&ch.inverse());
        Ok(MomentGaussian { mu, sigma })
    }

    pub fn from_moments(m: &MomentGaussian) -> Result<Self> {
        let ch = cholesky(&m.sigma).ok_or(Error::ImproperGaussian)?;
        let q = symmetrize(&ch.inverse());
        let r = &q * &m.mu;
        Ok(Self { r, q })
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        let ch = cholesky(&self.q).ok_or(Error::ImproperGaussian)?;
        Ok(ch.solve(&self.r))
    }

    /// Unnormalized log density `r'x - x'Qx/2`; defined for improper values too.
    pub fn log_kernel(&self, x: &DVector<f64>) -> f64 {
        self.r.dot(x) - 0.5 * x.dot(&(&self.q * x))
    }

    /// Gradient of [`Self::log_kernel`]: `r - Qx`.
    pub fn grad_log_kernel(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.r - &self.q * x
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let ch = cholesky(&self.q).ok_or(Error::ImproperGaussian)?;
        let mu = ch.solve(&self.r);
        let d = x - &mu;
        let quad = d.dot(&(&self.q * &d));
        let p = self.dim() as f64;
        Ok(-0.5 * p * (2.0 * PI).ln() + 0.5 * chol_logdet(&ch) - 0.5 * quad)
    }

    /// `count` draws as rows of a matrix, using the caller's stream.
    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        let ch = cholesky(&self.q).ok_or(Error::ImproperGaussian)?;
        let mu = ch.solve(&self.r);
        let p = self.dim();
        // Q = L L'  =>  x = mu + L^{-T} z has covariance Q^{-1}.
        let lt = ch.l().transpose();
        let mut out = DMatrix::zeros(count, p);
        let mut z = DVector::zeros(p);
        for i in 0..count {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = lt.solve_upper_triangular(&z).expect("cholesky factor is nonsingular");
            for j in 0..p {
                out[(i, j)] = mu[j] + x[j];
            }
        }
        Ok(out)
    }

    /// `count` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<SampleMatrix> {
        let mut rng = rng::from_seed(seed);
        let draws = self.sample_with(count, &mut rng)?;
        Ok(SampleMatrix::new(draws, "gaussian", seed))
    }
}

impl MomentGaussian {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        check_square(&sigma, mu.len())?;
        Ok(Self { mu, sigma: symmetrize(&sigma) })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Serialize, Deserialize)]
struct NaturalRepr {
    r: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MomentRepr {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * ncols);
    for row in rows {
        if row.len() != ncols {
            return Err(Error::DimensionMismatch { expected: ncols, got: row.len() });
        }
        flat.extend_from_slice(row);
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl From<NaturalGaussian> for NaturalRepr {
    fn from(g: NaturalGaussian) -> Self {
        Self { r: g.r.iter().copied().collect(), q: matrix_rows(&g.q) }
    }
}

impl TryFrom<NaturalRepr> for NaturalGaussian {
    type Error = Error;

    fn try_from(repr: NaturalRepr) -> Result<Self> {
        let p = repr.r.len();
        let q = matrix_from_rows(&repr.q, p)?;
        NaturalGaussian::new(DVector::from_vec(repr.r), q)
    }
}

impl From<MomentGaussian> for MomentRepr {
    fn from(g: MomentGaussian) -> Self {
        Self { mu: g.mu.iter().copied().collect(), sigma: matrix_rows(&g.sigma) }
    }
}

impl TryFrom<MomentRepr> for MomentGaussian {
    type Error = Error;

    fn try_from(repr: MomentRepr) -> Result<Self> {
        let p = repr.mu.len();
        let sigma = matrix_from_rows(&repr.sigma, p)?;
        MomentGaussian::new(DVector::from_vec(repr.mu), sigma)
    }
}
