mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use epel::epel::{
    self as ep, init_from_laplace, pool_sites, tilted_is, tilted_laplace, EpConfig, EpRunner, EpState, GaussianSite,
    SiteFactor, MODE_TOL,
};
use epel::harness;
use epel::models::Experiment;
use epel::{Error, NaturalGaussian, Result};

fn close(a: &NaturalGaussian, b: &NaturalGaussian, tol: f64) -> bool {
    (a.r() - b.r()).amax() <= tol && (a.q() - b.q()).amax() <= tol
}

fn product(gs: &[NaturalGaussian]) -> NaturalGaussian {
    gs.iter().skip(1).try_fold(gs[0].clone(), |a, g| a.product(g)).unwrap()
}

#[test]
fn laplace_initialization_splits_evenly() {
    let t = common::linreg2(0);
    let lap = t.laplace().unwrap();
    for d in [1, 2, 6] {
        let st = init_from_laplace(&lap, d).unwrap();
        assert!(close(&product(&st.sites), &lap.approx, 1e-12));
        assert!((st.sites[0].q() - lap.approx.q() / d as f64).amax() < 1e-15);
    }
    let one = init_from_laplace(&lap, 1).unwrap();
    assert_eq!(one.sites[0], one.global);
}

#[test]
fn cavities_divide_out_their_site() {
    let g = NaturalGaussian::new(dvector![1.0, 2.0], dmatrix![4.0, 1.0; 1.0, 3.0]).unwrap();
    let st = EpState::split(&g, 2).unwrap();
    let cav = st.cavity(0).unwrap();
    assert!(close(&cav, &g.scale(0.5), 1e-15));
    assert!(close(&cav.product(&st.sites[0]).unwrap(), &g, 1e-15));
    let big = EpState { sites: vec![g.scale(2.0), g.scale(-1.0)], ..st };
    assert!(!big.cavity(0).unwrap().is_proper());
}

#[test]
fn tilted_laplace_on_constant_and_gaussian_sites() {
    let cav = NaturalGaussian::new(dvector![0.5, -1.0], dmatrix![2.0, 0.4; 0.4, 1.0]).unwrap();
    let constant = GaussianSite::new(NaturalGaussian::zeros(2));
    let m = tilted_laplace(&constant, &cav).unwrap();
    let exact = cav.to_moments().unwrap();
    assert_eq!(m.mu, exact.mu);
    assert_eq!(m.sigma, exact.sigma);

    let factor = NaturalGaussian::new(dvector![1.0, 0.3], dmatrix![1.0, -0.2; -0.2, 0.5]).unwrap();
    let m = tilted_laplace(&GaussianSite::new(factor.clone()), &cav).unwrap();
    let exact = cav.product(&factor).unwrap().to_moments().unwrap();
    assert!((m.mu - exact.mu).amax() < 1e-10);
    assert!((m.sigma - exact.sigma).amax() < 1e-10);
}

#[test]
fn tilted_mode_is_stationary_on_linreg2_sites() {
    let t = common::linreg2(4);
    let lap = t.laplace().unwrap();
    let st = init_from_laplace(&lap, 6).unwrap();
    let sites = pool_sites(&t, 6).unwrap();
    for (i, site) in sites.iter().enumerate() {
        let cav = st.cavity(i).unwrap();
        let m = tilted_laplace(site.as_ref(), &cav).unwrap();
        let (_, g) = site.grad_log_factor(&m.mu).unwrap();
        let grad = g + cav.grad_log_kernel(&m.mu);
        assert!(grad.norm() <= MODE_TOL, "site {i}: {}", grad.norm());
    }
}

#[test]
fn importance_sampling_with_flat_weights_is_plain_monte_carlo() {
    let cav = NaturalGaussian::new(dvector![0.5, -1.0], dmatrix![2.0, 0.4; 0.4, 1.0]).unwrap();
    let exact = cav.to_moments().unwrap();
    let site = GaussianSite::new(NaturalGaussian::zeros(2));
    let mut rng = epel::rng::from_seed(3);
    let (m, ess) = tilted_is(&site, &cav, &cav, 5000, &mut rng).unwrap();
    assert_eq!(ess, 5000.0);
    for j in 0..2 {
        let se = (exact.sigma[(j, j)] / 5000.0).sqrt();
        assert!((m.mu[j] - exact.mu[j]).abs() < 4.0 * se);
    }
}

/// Nonzero only at the first point it is asked about.
struct FirstOnly(AtomicUsize);

impl SiteFactor for FirstOnly {
    fn dim(&self) -> usize {
        2
    }

    fn log_factor(&self, _theta: &DVector<f64>) -> Result<f64> {
        Ok(if self.0.fetch_add(1, Ordering::SeqCst) == 0 { 0.0 } else { f64::NEG_INFINITY })
    }

    fn grad_log_factor(&self, _theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Err(Error::NonDifferentiable("test site".into()))
    }

    fn smooth(&self) -> bool {
        false
    }
}

#[test]
fn a_single_surviving_draw_gives_a_point_mass() {
    let cav = NaturalGaussian::isotropic(&dvector![0.0, 0.0], 1.0);
    let site = FirstOnly(AtomicUsize::new(0));
    let (m, ess) = tilted_is(&site, &cav, &cav, 50, &mut epel::rng::from_seed(8)).unwrap();
    let first = cav.sample_with(1, &mut epel::rng::from_seed(8)).unwrap();
    assert_eq!(ess, 1.0);
    assert_eq!(m.sigma, DMatrix::zeros(2, 2));
    assert!((m.mu.transpose() - first.row(0)).amax() < 1e-15);

    let none = FirstOnly(AtomicUsize::new(1));
    assert!(matches!(tilted_is(&none, &cav, &cav, 50, &mut epel::rng::from_seed(8)), Err(Error::DisjointProposal)));
}

#[test]
fn gaussian_seam_reaches_the_exact_product_undamped() {
    let mut rng = epel::rng::from_seed(12);
    let factors: Vec<NaturalGaussian> = (0..4).map(|_| common::random_pd_gaussian(&mut rng, 3, 0.3)).collect();
    let exact = product(&factors);
    let sites = factors.iter().map(|f| Box::new(GaussianSite::new(f.clone())) as Box<dyn SiteFactor>).collect();
    let init = NaturalGaussian::isotropic(&DVector::zeros(3), 1.0);
    let cfg = EpConfig { num_sites: 4, damping: 1.0, max_cycles: 2, ..EpConfig::default() }.laplace_only();
    let mut runner = EpRunner::new(sites, &init, cfg).unwrap();
    while !runner.step().unwrap() {}
    assert!(runner.trace().records.len() <= 2);
    assert!(close(runner.global(), &exact, 1e-8));
}

#[test]
fn every_committed_cycle_keeps_the_product_and_is_proper() {
    let t = common::linreg2(5);
    let lap = t.laplace().unwrap();
    let cfg = EpConfig { warmup_cycles: 3, max_cycles: 6, is_samples: 500, convergence_tol: 0.0, ..EpConfig::default() };
    let mut runner = EpRunner::for_target(&t, &lap.approx, cfg).unwrap();
    while !runner.step().unwrap() {
        let st = runner.state();
        assert!(close(&product(&st.sites), &st.global, 1e-8));
        assert!(st.global.is_proper());
    }
    assert_eq!(runner.trace().records.len() + runner.trace().skipped, 6);
}

#[test]
fn fixed_seed_runs_repeat() {
    let t = common::linreg2(1);
    let lap = t.laplace().unwrap();
    let cfg = EpConfig { warmup_cycles: 1, max_cycles: 3, is_samples: 200, seed: 4, ..EpConfig::default() };
    let a = EpRunner::for_target(&t, &lap.approx, cfg.clone()).unwrap().run().unwrap().0;
    let b = EpRunner::for_target(&t, &lap.approx, cfg).unwrap().run().unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn linreg2_mean_matches_a_long_chain_and_ignores_site_assignment() {
    let (t, data) = common::experiment(Experiment::Linreg2, 0);
    let gold = harness::gold_standard(Experiment::Linreg2, &t, harness::Method::Mh, 1_000_000, 10_000, 99).unwrap();
    let gold_mean = DVector::from_vec(gold.mean());
    let (global, trace) = ep::run(&t, EpConfig::default()).unwrap();
    assert!(!trace.records.is_empty());
    let mean = ep::mean(&global).unwrap();
    assert!((&mean - &gold_mean).amax() <= 0.05, "{mean} vs {gold_mean}");

    // a fixed shuffle of the records changes which site each one lands in
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut rng = epel::rng::from_seed(1);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let shuffled = t.with_data(data.select(&order).unwrap()).unwrap();
    let (other, _) = ep::run(&shuffled, EpConfig::default()).unwrap();
    let other_mean = ep::mean(&other).unwrap();
    assert!((&mean - &other_mean).amax() <= 0.02, "{mean} vs {other_mean}");
}
