//! Profile empirical likelihood at a fixed parameter.
//!
//! `EL(theta) = max prod w_i` subject to `sum w_i h_i = 0`, `sum w_i = 1`. The
//! multiplier is found by maximizing the concave dual
//! `D(lambda) = sum log(1 + lambda'h_i)` with damped Newton steps, after which
//! `w_i = 1 / (n (1 + lambda'h_i))`. Points where the dual has no maximizer
//! (zero outside the convex hull of the `h_i`) are reported as out of support
//! rather than as errors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{self, ConstraintModel, Dataset};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Smallest admissible `1 + lambda'h_i` during the line search.
const MIN_DENOM: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;

/// Result of the inner optimization at one parameter value.
#[derive(Debug, Clone)]
pub struct ELEvaluation {
    pub lambda: DVector<f64>,
    /// Empty when out of support.
    pub weights: DVector<f64>,
    /// `sum log w_i`, or `-inf` when out of support.
    pub log_el: f64,
    pub in_support: bool,
    pub iterations: usize,
    /// The n x K constraint matrix the evaluation was computed from.
    pub h: DMatrix<f64>,
}

/// First derivatives of the profile EL.
#[derive(Debug, Clone)]
pub struct ELGradient {
    pub dlambda_dtheta: DMatrix<f64>,
    /// Row i is the gradient of `log w_i`.
    pub grad_log_w: DMatrix<f64>,
    pub grad_log_el: DVector<f64>,
}

impl ELEvaluation {
    fn outside(h: DMatrix<f64>, lambda: DVector<f64>, iterations: usize) -> Self {
        Self {
            lambda,
            weights: DVector::zeros(0),
            log_el: f64::NEG_INFINITY,
            in_support: false,
            iterations,
            h,
        }
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }
}

/// True when some coordinate of `h` never changes sign, which puts zero
/// outside the (relative interior of the) convex hull.
fn coordinate_sign_test_fails(h: &DMatrix<f64>) -> bool {
    h.column_iter().any(|col| {
        let all_nonneg = col.iter().all(|&v| v >= 0.0);
        let all_nonpos = col.iter().all(|&v| v <= 0.0);
        let all_zero = col.iter().all(|&v| v == 0.0);
        (all_nonneg || all_nonpos) && !all_zero
    })
}

/// `h lambda` into `out`.
fn project(h: &DMatrix<f64>, v: &DVector<f64>, out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for (j, col) in h.as_slice().chunks_exact(n).enumerate() {
        let c = v[j];
        for (t, x) in out.iter_mut().zip(col) {
            *t += c * x;
        }
    }
}

/// `D` from the inner products `t_i = lambda'h_i`.
fn dual_from_inner(inner: &[f64]) -> f64 {
    inner.iter().map(|t| t.ln_1p()).sum()
}

/// Dual gradient `sum h_i / a_i` and negative Hessian `sum h_i h_i' / a_i^2`
/// with `a_i = 1 + t_i`. `scaled` is scratch space of the same size as `h`.
fn newton_system(h: &DMatrix<f64>, inner: &[f64], scaled: &mut [f64], grad: &mut DVector<f64>, info: &mut DMatrix<f64>) {
    let n = inner.len();
    let k = h.ncols();
    for (src, dst) in h.as_slice().chunks_exact(n).zip(scaled.chunks_exact_mut(n)) {
        for ((d, v), t) in dst.iter_mut().zip(src).zip(inner) {
            *d = v / (1.0 + t);
        }
    }
    for j in 0..k {
        let sj = &scaled[j * n..(j + 1) * n];
        grad[j] = sj.iter().sum();
        for l in 0..=j {
            let sl = &scaled[l * n..(l + 1) * n];
            let v: f64 = sj.iter().zip(sl).map(|(x, y)| x * y).sum();
            info[(j, l)] = v;
            info[(l, j)] = v;
        }
    }
}

/// Moves `inner` to `inner + step * dir` in `trial` and returns the slope of
/// the dual along `dir` there, or `None` if a denominator leaves the domain.
fn trial_point(inner: &[f64], dir: &[f64], step: f64, trial: &mut [f64]) -> Option<f64> {
    let mut slope = 0.0;
    for ((out, t), d) in trial.iter_mut().zip(inner).zip(dir) {
        let v = t + step * d;
        let a = 1.0 + v;
        if !(a >= MIN_DENOM) || !a.is_finite() {
            return None;
        }
        *out = v;
        slope += d / a;
    }
    Some(slope)
}

/// Solves for the EL multiplier given the n x K matrix of constraint values.
pub fn solve_lambda(h: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<ELEvaluation> {
    let (n, k) = h.shape();
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("empty constraint matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in constraint matrix".into()));
    }
    let mut lambda = DVector::zeros(k);
    if coordinate_sign_test_fails(h) {
        return Ok(ELEvaluation::outside(h.clone(), lambda, 0));
    }

    let nf = n as f64;
    let mut inner = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut hd = vec![0.0; n];
    let mut scaled = vec![0.0; n * k];
    let mut grad = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    // the dual value is only needed when a step overshoots the line maximum
    let mut dual: Option<f64> = Some(0.0);
    let mut converged = false;
    let mut iterations = 0;
    loop {
        newton_system(h, &inner, &mut scaled, &mut grad, &mut info);
        if grad.norm() <= tol * nf && lambda.dot(&grad).abs() <= tol * nf {
            converged = true;
            break;
        }
        if iterations == max_iter {
            break;
        }
        iterations += 1;
        let direction = match linalg::cholesky(&info) {
            Some(ch) => ch.solve(&grad),
            None => {
                let (fixed, _) = linalg::ridge_repair(&info, 1e-12);
                match linalg::cholesky(&fixed) {
                    Some(ch) => ch.solve(&grad),
                    None => break,
                }
            }
        };
        project(h, &direction, &mut hd);
        let slope0 = grad.dot(&direction);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-14 {
            if let Some(slope) = trial_point(&inner, &hd, step, &mut trial) {
                // concavity: a non-negative slope at the trial point means the
                // dual has not decreased along the segment
                let ok = if slope >= 0.0 {
                    dual = None;
                    true
                } else {
                    let current = *dual.get_or_insert_with(|| dual_from_inner(&inner));
                    let value = dual_from_inner(&trial);
                    if value >= current + ARMIJO * step * slope0 {
                        dual = Some(value);
                        true
                    } else {
                        false
                    }
                };
                if ok {
                    lambda.axpy(step, &direction, 1.0);
                    std::mem::swap(&mut inner, &mut trial);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            newton_system(h, &inner, &mut scaled, &mut grad, &mut info);
            converged = grad.norm() <= tol * nf && lambda.dot(&grad).abs() <= tol * nf;
            break;
        }
    }
    if !converged {
        return Ok(ELEvaluation::outside(h.clone(), lambda, iterations));
    }
    // one more full Newton step: quadratic convergence takes the multiplier
    // from the stopping tolerance to rounding level, which derivative users need
    if let Some(ch) = linalg::cholesky(&info) {
        let direction = ch.solve(&grad);
        project(h, &direction, &mut hd);
        if trial_point(&inner, &hd, 1.0, &mut trial).is_some() {
            let current = dual.unwrap_or_else(|| dual_from_inner(&inner));
            if dual_from_inner(&trial) >= current - 1e-12 * (1.0 + current.abs()) {
                lambda += direction;
                std::mem::swap(&mut inner, &mut trial);
            }
        }
    }
    let weights = DVector::from_iterator(n, inner.iter().map(|t| 1.0 / (nf * (1.0 + t))));
    let log_el = -nf * nf.ln() - dual_from_inner(&inner);
    Ok(ELEvaluation {
        lambda,
        weights,
        log_el,
        in_support: true,
        iterations,
        h: h.clone(),
    })
}

/// Evaluates the profile EL of `model` on `data` at `theta`.
pub fn eval_el(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64]) -> Result<ELEvaluation> {
    let h = models::h_matrix(model, data, theta)?;
    solve_lambda(&h, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Implicit-function derivatives from an in-support evaluation and the
/// flattened per-row Jacobians of `h` (row i at `[i*K*p, (i+1)*K*p)`).
pub fn gradient_from_parts(ev: &ELEvaluation, jac: &[f64], p: usize) -> Result<ELGradient> {
    if !ev.in_support {
        return Err(Error::OutOfSupport);
    }
    let (n, k) = ev.h.shape();
    if jac.len() != n * k * p {
        return Err(Error::DimensionMismatch { expected: n * k * p, got: jac.len() });
    }
    let nf = n as f64;
    let w = &ev.weights;
    let lambda = &ev.lambda;

    // A = sum w_i^2 h_i h_i'
    let mut wh = ev.h.clone();
    for (i, mut row) in wh.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let a = wh.tr_mul(&wh);
    // B = sum w_i (I/n - w_i h_i lambda') J_i
    let mut b = DMatrix::zeros(k, p);
    let mut lam_j = vec![0.0; p];
    for i in 0..n {
        let ji = &jac[i * k * p..(i + 1) * k * p];
        lam_j.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..k {
            for c in 0..p {
                lam_j[c] += lambda[r] * ji[r * p + c];
            }
        }
        let wi = w[i];
        for r in 0..k {
            let hr = wi * wi * ev.h[(i, r)];
            for c in 0..p {
                b[(r, c)] += wi / nf * ji[r * p + c] - hr * lam_j[c];
            }
        }
    }
    let ch = linalg::cholesky(&a).ok_or(Error::DegenerateSpan)?;
    let diag = ch.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(Error::DegenerateSpan);
    }
    let dlambda = ch.solve(&b);

    // grad log w_i = -(h_i' dlambda + lambda' J_i) / (1 + lambda'h_i)
    let mut grad_log_w = DMatrix::zeros(n, p);
    for i in 0..n {
        let ji = &jac[i * k * p..(i + 1) * k * p];
        let denom = 1.0 / (nf * w[i]);
        for c in 0..p {
            let mut s = 0.0;
            for r in 0..k {
                s += ev.h[(i, r)] * dlambda[(r, c)] + lambda[r] * ji[r * p + c];
            }
            grad_log_w[(i, c)] = -s / denom;
        }
    }
    let grad_log_el = grad_log_w.row_sum().transpose();
    Ok(ELGradient { dlambda_dtheta: dlambda, grad_log_w, grad_log_el })
}

pub fn el_gradient(
    model: &dyn ConstraintModel,
    data: &Dataset,
    theta: &[f64],
    ev: &ELEvaluation,
) -> Result<ELGradient> {
    let jac = models::jacobians_flat(model, data, theta)?;
    gradient_from_parts(ev, &jac, model.p())
}

/// `(log EL, grad log EL)`; `OutOfSupport` when EL vanishes.
pub fn log_el_and_grad(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64]) -> Result<(f64, DVector<f64>)> {
    let ev = eval_el(model, data, theta)?;
    if !ev.in_support {
        return Err(Error::OutOfSupport);
    }
    let g = el_gradient(model, data, theta, &ev)?;
    Ok((ev.log_el, g.grad_log_el))
}

/// Hessian of log EL by symmetrized central differences of the analytic gradient.
pub fn el_hessian_fd(
    model: &dyn ConstraintModel,
    data: &Dataset,
    theta: &[f64],
    step: Option<f64>,
) -> Result<DMatrix<f64>> {
    let x = DVector::from_column_slice(theta);
    linalg::fd_hessian(&x, step, |probe| {
        log_el_and_grad(model, data, probe.as_slice())
            .map(|(_, g)| g)
            .map_err(|e| match e {
                Error::OutOfSupport => Error::SupportBoundary {
                    step: step.unwrap_or_else(|| linalg::fd_step(probe.amax())),
                },
                other => other,
            })
    })
}
