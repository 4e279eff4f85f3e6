//! Full-covariance Gaussian variational Bayes on the adjusted-EL posterior,
//! with reparameterized (pathwise) gradients and Adam.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::elcore::{self, ELEvaluation, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::gaussian::{MomentGaussian, NaturalGaussian};
use crate::linalg;
use crate::models::{self, ConstraintModel, Dataset};
use crate::posterior::{LogDensity, Target};
use crate::rng::{self, Rng as VbRng};

/// Profile EL with one pseudo-observation `-(a_n / n) sum_i h_i` appended,
/// which keeps zero inside the convex hull for every `theta`. `a_n = 0`
/// disables the adjustment.
pub fn adjusted_el(model: &dyn ConstraintModel, data: &Dataset, theta: &[f64], a_n: f64) -> Result<ELEvaluation> {
    if !(a_n >= 0.0) {
        return Err(Error::InvalidInput(format!("adjustment must be non-negative, got {a_n}")));
    }
    if a_n == 0.0 {
        return elcore::eval_el(model, data, theta);
    }
    let h = models::h_matrix(model, data, theta)?;
    elcore::solve_lambda(&augment(&h, a_n), DEFAULT_TOL, DEFAULT_MAX_ITER)
}

fn augment(h: &DMatrix<f64>, a_n: f64) -> DMatrix<f64> {
    let n = h.nrows();
    let pseudo = h.row_sum() * (-a_n / n as f64);
    let mut out = h.clone().insert_row(n, 0.0);
    out.row_mut(n).copy_from(&pseudo);
    out
}

/// Prior times adjusted EL, as a log density.
#[derive(Debug, Clone)]
pub struct AdjustedPosterior {
    target: Target,
    a_n: f64,
}

impl AdjustedPosterior {
    pub fn new(target: Target, a_n: f64) -> Result<Self> {
        if !(a_n >= 0.0) {
            return Err(Error::InvalidInput(format!("adjustment must be non-negative, got {a_n}")));
        }
        Ok(Self { target, a_n })
    }

    /// Default adjustment `log(n) / 2`.
    pub fn default_adjustment(n: usize) -> f64 {
        (n as f64).ln() / 2.0
    }

    pub fn adjustment(&self) -> f64 {
        self.a_n
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    fn evaluation(&self, theta: &DVector<f64>) -> Result<ELEvaluation> {
        self.target.count_evaluation();
        adjusted_el(self.target.model().as_ref(), self.target.data(), theta.as_slice(), self.a_n)
    }
}

impl LogDensity for AdjustedPosterior {
    fn dim(&self) -> usize {
        self.target.p()
    }

    fn log_density(&self, theta: &DVector<f64>) -> Result<f64> {
        if !self.target.el_enabled() {
            return self.target.log_post(theta);
        }
        let prior = self.target.prior().log_pdf(theta)?;
        Ok(prior + self.evaluation(theta)?.log_el)
    }

    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if !self.target.el_enabled() || self.a_n == 0.0 {
            return self.target.log_post_and_grad(theta);
        }
        let model = self.target.model();
        if !model.smooth() {
            return Err(Error::NonDifferentiable(model.name().to_string()));
        }
        let ev = self.evaluation(theta)?;
        if !ev.in_support {
            return Err(Error::OutOfSupport);
        }
        let (k, p) = (model.k(), model.p());
        let data = self.target.data();
        let mut jac = models::jacobians_flat(model.as_ref(), data, theta.as_slice())?;
        // the pseudo-row moves with theta: J_{n+1} = -(a_n / n) sum_i J_i
        let scale = -self.a_n / data.n() as f64;
        let mut pseudo = vec![0.0; k * p];
        for chunk in jac.chunks(k * p) {
            pseudo.iter_mut().zip(chunk).for_each(|(s, v)| *s += scale * v);
        }
        jac.extend_from_slice(&pseudo);
        let g = elcore::gradient_from_parts(&ev, &jac, p)?;
        let prior = self.target.prior();
        Ok((prior.log_pdf(theta)? + ev.log_el, prior.grad_log_kernel(theta) + g.grad_log_el))
    }

    fn smooth(&self) -> bool {
        self.target.model().smooth() || !self.target.el_enabled()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Variational parameters: a mean and a lower-triangular scale whose diagonal
/// is the softplus of an unconstrained value. Stored as one flat vector
/// `(mu, lower triangle of the raw scale by rows)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VbParams {
    p: usize,
    raw: DVector<f64>,
}

impl VbParams {
    pub fn new(mu: &DVector<f64>, scale_tril: &DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        if scale_tril.shape() != (p, p) {
            return Err(Error::DimensionMismatch { expected: p, got: scale_tril.nrows() });
        }
        let mut raw = DVector::zeros(p + p * (p + 1) / 2);
        raw.rows_mut(0, p).copy_from(mu);
        let mut idx = p;
        for i in 0..p {
            for j in 0..=i {
                let v = scale_tril[(i, j)];
                raw[idx] = if i == j {
                    if !(v > 0.0) {
                        return Err(Error::InvalidInput("scale diagonal must be positive".into()));
                    }
                    softplus_inv(v)
                } else {
                    v
                };
                idx += 1;
            }
        }
        Ok(Self { p, raw })
    }

    /// From a proper Gaussian: mean and Cholesky factor of the covariance.
    pub fn from_gaussian(g: &NaturalGaussian) -> Result<Self> {
        let m = g.to_moments()?;
        let l = linalg::cholesky(&m.sigma).ok_or(Error::ImproperGaussian)?.l();
        Self::new(&m.mu, &l)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn mu(&self) -> DVector<f64> {
        self.raw.rows(0, self.p).into_owned()
    }

    pub fn scale_tril(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut l = DMatrix::zeros(p, p);
        let mut idx = p;
        for i in 0..p {
            for j in 0..=i {
                l[(i, j)] = if i == j { softplus(self.raw[idx]) } else { self.raw[idx] };
                idx += 1;
            }
        }
        l
    }

    pub fn to_gaussian(&self) -> Result<NaturalGaussian> {
        let l = self.scale_tril();
        NaturalGaussian::from_moments(&MomentGaussian::new(self.mu(), &l * l.transpose())?)
    }

    /// Entropy `p/2 log(2 pi e) + sum log L_jj`.
    pub fn entropy(&self) -> f64 {
        let l = self.scale_tril();
        0.5 * self.p as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
            + l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn raw(&self) -> &DVector<f64> {
        &self.raw
    }
}

/// ELBO estimate and its gradient with respect to the flat raw parameters,
/// for fixed standard-normal noise (one column per Monte Carlo draw).
pub fn elbo_with_noise(density: &dyn LogDensity, params: &VbParams, noise: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let p = params.p;
    let l = params.scale_tril();
    let mu = params.mu();
    let draws = noise.ncols();
    let mut value = 0.0;
    let mut grad = DVector::zeros(params.raw.len());
    for c in 0..draws {
        let eps = noise.column(c);
        let theta = &mu + &l * eps;
        let (lp, g) = density.value_and_grad(&theta)?;
        value += lp;
        for i in 0..p {
            grad[i] += g[i];
        }
        let mut idx = p;
        for i in 0..p {
            for j in 0..=i {
                grad[idx] += g[i] * eps[j];
                idx += 1;
            }
        }
    }
    let m = draws as f64;
    value /= m;
    grad /= m;
    value += params.entropy();
    // entropy gradient and the softplus chain rule on the diagonal
    let mut idx = p;
    for i in 0..p {
        for j in 0..=i {
            if i == j {
                let u = params.raw[idx];
                grad[idx] = (grad[idx] + 1.0 / softplus(u)) * sigmoid(u);
            }
            idx += 1;
        }
    }
    Ok((value, grad))
}

/// One-sample-per-column pathwise ELBO gradient with fresh noise from `rng`.
pub fn elbo_grad_pathwise<R: Rng + ?Sized>(
    density: &dyn LogDensity,
    params: &VbParams,
    mc_samples: usize,
    rng: &mut R,
) -> Result<(f64, DVector<f64>)> {
    if !density.smooth() {
        return Err(Error::NonDifferentiable("pathwise gradients need a smooth target".into()));
    }
    let noise = DMatrix::from_fn(params.p, mc_samples.max(1), |_, _| rng.sample::<f64, _>(StandardNormal));
    elbo_with_noise(density, params, &noise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VbConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub mc_samples: usize,
    /// `a_n`; `log(n) / 2` when absent.
    pub adjustment: Option<f64>,
    pub seed: u64,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, steps: 20_000, mc_samples: 1, adjustment: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbRecord {
    pub step: usize,
    pub elbo_estimate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VbTrace {
    pub records: Vec<VbRecord>,
    /// Steps skipped because a draw left the support.
    pub skipped: usize,
}

impl VbTrace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam ascent on the ELBO, one step at a time.
pub struct VbRunner<'a> {
    density: &'a dyn LogDensity,
    cfg: VbConfig,
    params: VbParams,
    m: DVector<f64>,
    v: DVector<f64>,
    step: usize,
    rng: VbRng,
    trace: VbTrace,
    started: Instant,
}

impl<'a> VbRunner<'a> {
    pub fn new(density: &'a dyn LogDensity, init: &NaturalGaussian, cfg: &VbConfig) -> Result<Self> {
        if !(cfg.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if cfg.adjustment.is_some_and(|a| !(a >= 0.0)) {
            return Err(Error::InvalidInput("adjustment must be non-negative".into()));
        }
        if init.dim() != density.dim() {
            return Err(Error::DimensionMismatch { expected: density.dim(), got: init.dim() });
        }
        if !density.smooth() {
            return Err(Error::NonDifferentiable("pathwise gradients need a smooth target".into()));
        }
        let params = VbParams::from_gaussian(init)?;
        let n = params.raw.len();
        Ok(Self {
            density,
            cfg: cfg.clone(),
            params,
            m: DVector::zeros(n),
            v: DVector::zeros(n),
            step: 0,
            rng: rng::stream(cfg.seed, &[0x7662]),
            trace: VbTrace::default(),
            started: Instant::now(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.steps
    }

    pub fn params(&self) -> &VbParams {
        &self.params
    }

    pub fn current(&self) -> Result<NaturalGaussian> {
        self.params.to_gaussian()
    }

    pub fn trace(&self) -> &VbTrace {
        &self.trace
    }

    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        self.step += 1;
        let (elbo, grad) = match elbo_grad_pathwise(self.density, &self.params, self.cfg.mc_samples, &mut self.rng) {
            Ok(r) => r,
            Err(Error::OutOfSupport) => {
                self.trace.skipped += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let t = self.step as i32;
        self.m = &self.m * ADAM_BETA1 + &grad * (1.0 - ADAM_BETA1);
        self.v = &self.v * ADAM_BETA2 + grad.map(|g| g * g) * (1.0 - ADAM_BETA2);
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let lr = self.cfg.learning_rate;
        for i in 0..self.params.raw.len() {
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            self.params.raw[i] += lr * mh / (vh.sqrt() + ADAM_EPS);
        }
        self.trace.records.push(VbRecord {
            step: self.step,
            elbo_estimate: elbo,
            seconds: self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    pub fn run(mut self) -> Result<(NaturalGaussian, VbTrace)> {
        while !self.is_done() {
            self.step()?;
        }
        Ok((self.current()?, self.trace))
    }
}

/// VB started from `init` on any smooth density.
pub fn vb_run(density: &dyn LogDensity, init: &NaturalGaussian, cfg: &VbConfig) -> Result<(NaturalGaussian, VbTrace)> {
    VbRunner::new(density, init, cfg)?.run()
}

/// VB on the adjusted-EL posterior of `target`, started from its Laplace
/// approximation.
pub fn vb_for_target(target: &Target, cfg: &VbConfig) -> Result<(NaturalGaussian, VbTrace)> {
    let laplace = target.laplace()?;
    let a_n = cfg.adjustment.unwrap_or_else(|| AdjustedPosterior::default_adjustment(target.data().n()));
    let density = AdjustedPosterior::new(target.clone(), a_n)?;
    vb_run(&density, &laplace.approx, cfg)
}
