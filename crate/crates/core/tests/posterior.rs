mod common;

use nalgebra::{dvector, DMatrix, DVector};

use epel::elcore;
use epel::NaturalGaussian;

#[test]
fn log_post_is_prior_plus_log_el() {
    let t = common::linreg2(2);
    let theta = dvector![0.45, 1.05];
    let el = elcore::eval_el(t.model().as_ref(), t.data(), theta.as_slice()).unwrap().log_el;
    let prior = t.prior().log_pdf(&theta).unwrap();
    assert!((t.log_post(&theta).unwrap() - (prior + el)).abs() < 1e-12);
    assert_eq!(t.log_post(&dvector![40.0, -40.0]).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn flat_prior_limit_barely_moves_differences() {
    let t = common::linreg2(2);
    let wide = t.clone().with_prior(NaturalGaussian::isotropic(&DVector::zeros(2), 1e6)).unwrap();
    let (a, b) = (dvector![0.45, 1.05], dvector![0.6, 0.9]);
    let d1 = t.log_post(&a).unwrap() - t.log_post(&b).unwrap();
    let d2 = wide.log_post(&a).unwrap() - wide.log_post(&b).unwrap();
    assert!((d1 - d2).abs() <= 1e-3, "{d1} vs {d2}");
}

#[test]
fn gradient_matches_finite_differences() {
    let t = common::linreg2(8);
    for theta in common::points_near_mode(&t, 20, 1.5, 9) {
        let g = t.grad_log_post(&theta).unwrap();
        let fd = common::fd_gradient(|x| t.log_post(x).unwrap(), &theta, 1e-6);
        let err = (&fd - &g).norm() / g.norm();
        assert!(err <= 1e-5, "rel err {err}");
        let h = t.hess_log_post(&theta).unwrap();
        assert_eq!(h, h.transpose());
    }
}

#[test]
fn prior_only_gradient_is_exact() {
    let t = common::linreg2(0).prior_only();
    let theta = dvector![3.0, -7.0];
    let g = t.grad_log_post(&theta).unwrap();
    let expect = t.prior().r() - t.prior().q() * &theta;
    assert_eq!(g, expect);
}

fn ols(t: &epel::Target) -> DVector<f64> {
    let data = t.data();
    let n = data.n();
    let x = DMatrix::from_fn(n, 2, |i, j| data.row(i)[1 + j]);
    let y = DVector::from_fn(n, |i, _| data.row(i)[0]);
    (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * y))
}

#[test]
fn map_is_near_least_squares_and_stationary() {
    for seed in 0..5 {
        let t = common::linreg2(seed);
        let lap = t.laplace().unwrap();
        assert!(lap.converged);
        assert!((&lap.mode - ols(&t)).amax() < 0.15);
        let scale = 1.0 + t.grad_log_post(&t.estimating_equation_start().unwrap()).unwrap().norm();
        assert!(t.grad_log_post(&lap.mode).unwrap().norm() <= 1e-8 * scale);
        assert!(lap.approx.is_proper());
        let again = t.map_newton(Some(&lap.mode), 1e-8, 200).unwrap();
        assert!(again.newton_iters <= 1);
    }
}

#[test]
fn map_does_not_depend_on_the_start() {
    let t = common::linreg2(3);
    let lap = t.laplace().unwrap();
    for start in common::points_near_mode(&t, 5, 2.0, 1) {
        let other = t.map_newton(Some(&start), 1e-8, 200).unwrap();
        assert!(other.converged);
        let scale = 1.0 + t.grad_log_post(&start).unwrap().norm();
        assert!(t.grad_log_post(&other.mode).unwrap().norm() <= 2e-8 * scale);
        assert!((&other.mode - &lap.mode).amax() < 1e-6);
    }
}

#[test]
fn log_post_ignores_record_order() {
    let t = common::linreg2(6);
    let n = t.data().n();
    let order: Vec<usize> = (0..n).rev().collect();
    let shuffled = t.with_data(t.data().select(&order).unwrap()).unwrap();
    for theta in common::points_near_mode(&t, 5, 1.0, 2) {
        let (a, b) = (t.log_post(&theta).unwrap(), shuffled.log_post(&theta).unwrap());
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}

#[test]
fn evaluations_are_counted() {
    let t = common::linreg2(0);
    let before = t.el_evals();
    t.log_post(&dvector![0.5, 1.0]).unwrap();
    assert_eq!(t.el_evals(), before + 1);
}
