#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use epel::models::{self, Dataset, Experiment, LinearRegression, LogisticRegression};
use epel::{NaturalGaussian, Target};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximizer and maximum of a concave function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..400 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        }
    }
    if fa > fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Brute-force profile log EL for scalar constraints and `n <= 4`: the
/// weights of the two extreme records are eliminated through the equality
/// constraints and `sum log w_i` is maximized over the remaining free weights
/// by (nested) golden-section search on the feasible polytope.
pub fn el_oracle(h: &[f64]) -> f64 {
    let n = h.len();
    assert!((2..=4).contains(&n), "oracle covers 2 <= n <= 4");
    let lo_idx = (0..n).min_by(|&i, &j| h[i].total_cmp(&h[j])).unwrap();
    let hi_idx = (0..n).max_by(|&i, &j| h[i].total_cmp(&h[j])).unwrap();
    let free: Vec<usize> = (0..n).filter(|&i| i != lo_idx && i != hi_idx).collect();
    let (ha, hb) = (h[lo_idx], h[hi_idx]);
    // weights of the extreme records given the free ones
    let extremes = |x: &[f64]| -> (f64, f64) {
        let s: f64 = x.iter().sum();
        let t: f64 = x.iter().zip(&free).map(|(w, &i)| w * h[i]).sum();
        let wa = (-t - hb * (1.0 - s)) / (ha - hb);
        (wa, 1.0 - s - wa)
    };
    let objective = |x: &[f64]| -> f64 {
        let (wa, wb) = extremes(x);
        if wa <= 0.0 || wb <= 0.0 || x.iter().any(|&w| w <= 0.0) {
            return f64::NEG_INFINITY;
        }
        wa.ln() + wb.ln() + x.iter().map(|w| w.ln()).sum::<f64>()
    };
    // each extreme weight is affine in the free weights: c0 + c . x
    let affine = |which: usize| -> (f64, Vec<f64>) {
        let zero = vec![0.0; free.len()];
        let pick = |x: &[f64]| if which == 0 { extremes(x).0 } else { extremes(x).1 };
        let c0 = pick(&zero);
        let c = (0..free.len())
            .map(|k| {
                let mut e = zero.clone();
                e[k] = 1.0;
                pick(&e) - c0
            })
            .collect();
        (c0, c)
    };
    // interval of x_k >= 0 with c0 + c x_k >= 0 for every constraint, other coordinates fixed
    let interval = |cons: &[(f64, f64)]| -> (f64, f64) {
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        for &(c0, c) in cons {
            if c > 0.0 {
                lo = lo.max(-c0 / c);
            } else if c < 0.0 {
                hi = hi.min(-c0 / c);
            } else if c0 < 0.0 {
                return (1.0, 0.0);
            }
        }
        (lo, hi)
    };
    let rows = [affine(0), affine(1)];
    match free.len() {
        0 => objective(&[]),
        1 => {
            let (lo, hi) = interval(&[(rows[0].0, rows[0].1[0]), (rows[1].0, rows[1].1[0])]);
            golden_max(|x| objective(&[x]), lo, hi).1
        }
        2 => {
            // the x_0 range is the projection of the polygon; vertices from pairwise line intersections
            let lines = [
                (0.0, [1.0, 0.0]),
                (0.0, [0.0, 1.0]),
                (rows[0].0, [rows[0].1[0], rows[0].1[1]]),
                (rows[1].0, [rows[1].1[0], rows[1].1[1]]),
            ];
            let feasible = |x: [f64; 2]| lines.iter().all(|(c0, c)| c0 + c[0] * x[0] + c[1] * x[1] >= -1e-14);
            let mut xs = Vec::new();
            for i in 0..4 {
                for j in i + 1..4 {
                    let (a0, a) = lines[i];
                    let (b0, b) = lines[j];
                    let det = a[0] * b[1] - a[1] * b[0];
                    if det.abs() < 1e-300 {
                        continue;
                    }
                    let x = [(-a0 * b[1] + b0 * a[1]) / det, (-a[0] * b0 + b[0] * a0) / det];
                    if feasible(x) {
                        xs.push(x[0]);
                    }
                }
            }
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let inner = |x0: f64| {
                let cons: Vec<(f64, f64)> =
                    rows.iter().map(|(c0, c)| (c0 + c[0] * x0, c[1])).collect();
                let (l, u) = interval(&cons);
                if !(u > l) {
                    return f64::NEG_INFINITY;
                }
                golden_max(|x1| objective(&[x0, x1]), l, u).1
            };
            golden_max(inner, lo, hi).1
        }
        _ => unreachable!(),
    }
}

/// Scalar constraint values with zero strictly inside their hull.
pub fn hull_instance<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let h: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let min = h.iter().copied().fold(f64::INFINITY, f64::min);
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min < -1e-3 && max > 1e-3 {
            return h;
        }
    }
}

/// Central differences with per-coordinate step `rel * (1 + |x_j|)`.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, rel: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = rel * (1.0 + x[j].abs());
        let mut up = x.clone();
        let mut down = x.clone();
        up[j] += h;
        down[j] -= h;
        jac.set_column(j, &((f(&up) - f(&down)) / (2.0 * h)));
    }
    jac
}

pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, rel: f64) -> DVector<f64> {
    fd_jacobian(|y| DVector::from_element(1, f(y)), x, rel).row(0).transpose()
}

/// `||a - b|| / ||b||`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn linreg2(seed: u64) -> Target {
    let data = models::generate("linreg2", seed).unwrap();
    Target::new(Arc::new(LinearRegression::new(2)), data).unwrap()
}

pub fn linreg_n(n: usize, seed: u64) -> Target {
    let data = models::linreg_with_n(&[0.5, 1.0], n, seed).unwrap();
    Target::new(Arc::new(LinearRegression::new(2)), data).unwrap()
}

pub fn kyphosis() -> Target {
    Target::new(Arc::new(LogisticRegression::new(4)), models::kyphosis().unwrap()).unwrap()
}

pub fn experiment(e: Experiment, seed: u64) -> (Target, Dataset) {
    let data = e.dataset(seed).unwrap();
    (Target::new(e.model(false), data.clone()).unwrap(), data)
}

/// Random Gaussian with a PD precision of bounded condition number.
pub fn random_pd_gaussian<R: Rng>(rng: &mut R, p: usize, scale: f64) -> NaturalGaussian {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = (&a * a.transpose() + DMatrix::identity(p, p) * p as f64) * scale;
    let r = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    NaturalGaussian::new(r, q).unwrap()
}

/// Points around the Laplace mode at `spread` Laplace standard deviations,
/// kept when log EL is finite.
pub fn points_near_mode(target: &Target, count: usize, spread: f64, seed: u64) -> Vec<DVector<f64>> {
    let lap = target.laplace().unwrap();
    let cov = lap.approx.to_moments().unwrap().sigma;
    let l = cov.cholesky().unwrap().l();
    let mut rng = epel::rng::from_seed(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = DVector::from_fn(target.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &lap.mode + &l * z * spread;
        if target.log_post(&theta).unwrap().is_finite() {
            out.push(theta);
        }
    }
    out
}
