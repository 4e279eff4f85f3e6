use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spec::{Clock, ExperimentSpec, Method, MethodConfig, RepSeeds};
use crate::epel::{EpConfig, EpRunner, EpTrace};
use crate::error::{Error, Result};
use crate::gaussian::NaturalGaussian;
use crate::models::Experiment;
use crate::nbp;
use crate::posterior::{LaplaceResult, Target};
use crate::rng;
use crate::samplers::{self, ChainConfig, HmcSampler, MhSampler};
use crate::samples::SampleMatrix;
use crate::vb::{AdjustedPosterior, VbConfig, VbRunner, VbTrace};

/// MCMC draws kept by a timed baseline chain unless configured otherwise.
pub const HARNESS_CHAIN_DRAWS: usize = 1_000_000;

/// One scored snapshot of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub rep: usize,
    pub checkpoint_seconds: f64,
    /// Clock reading when the snapshot was taken (seconds or evaluations).
    pub clock: f64,
    pub nbp_count: Option<usize>,
    pub threshold: usize,
    pub pass: bool,
    pub extra: String,
    /// Why no score was produced.
    pub skipped: Option<String>,
}

/// Provenance written next to a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub version: String,
    pub threshold: usize,
    pub seeds: Vec<RepSeeds>,
    pub gold: Vec<GoldSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldSummary {
    pub rep: usize,
    pub draws: usize,
    pub accept_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
}

/// Target of an experiment on the dataset drawn with `data_seed`.
pub fn experiment_target(experiment: Experiment, data_seed: u64, smooth: bool) -> Result<Target> {
    Target::new(experiment.model(smooth), experiment.dataset(data_seed)?)
}

fn ep_config(experiment: Experiment, cfg: &MethodConfig, seed: u64) -> EpConfig {
    let base = cfg.epel.clone().unwrap_or(EpConfig { num_sites: experiment.ep_sites(), ..EpConfig::default() });
    EpConfig { seed, ..base }
}

fn vb_config(cfg: &MethodConfig, seed: u64) -> VbConfig {
    VbConfig { seed, ..cfg.vb.clone().unwrap_or_default() }
}

/// Chain settings for `target`: configured values, or the per-experiment MH
/// shrinkage with a pilot scale taken from the Laplace covariance.
fn chain_config(experiment: Experiment, cfg: &MethodConfig, pilot_scale: f64, draws: usize, seed: u64) -> ChainConfig {
    match &cfg.chain {
        Some(c) => ChainConfig { seed, ..c.clone() },
        None => ChainConfig {
            draws,
            shrinkage: experiment.mh_shrinkage(),
            pilot_scale,
            seed,
            ..ChainConfig::default()
        },
    }
}

/// Long reference chain for `target`.
pub fn gold_standard(
    experiment: Experiment,
    target: &Target,
    method: Method,
    draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    let (start, pilot_scale) = samplers::target_start(target)?;
    let cfg = ChainConfig {
        draws,
        burn_in,
        shrinkage: experiment.mh_shrinkage(),
        pilot_scale,
        seed,
        ..ChainConfig::default()
    };
    match method {
        Method::Mh => samplers::mh_run(target, &start, &cfg),
        Method::Hmc => samplers::hmc_run(target, &start, &cfg),
        other => Err(Error::InvalidInput(format!("`{other}` cannot build a gold standard"))),
    }
}

/// Finished output of a single method run.
#[derive(Debug, Clone)]
pub enum FitOutput {
    Gaussian {
        approx: NaturalGaussian,
        laplace: Option<LaplaceResult>,
        ep_trace: Option<EpTrace>,
        vb_trace: Option<VbTrace>,
    },
    Chain(SampleMatrix),
}

/// Runs one method to completion on `target`.
pub fn fit_method(experiment: Experiment, target: &Target, method: Method, cfg: &MethodConfig, seed: u64) -> Result<FitOutput> {
    match method {
        Method::Laplace => {
            let laplace = target.laplace_or_surrogate()?;
            Ok(FitOutput::Gaussian { approx: laplace.approx.clone(), laplace: Some(laplace), ep_trace: None, vb_trace: None })
        }
        Method::Epel => {
            let laplace = target.laplace_or_surrogate()?;
            let runner = EpRunner::for_target(target, &laplace.approx, ep_config(experiment, cfg, seed))?;
            let (approx, trace) = runner.run()?;
            Ok(FitOutput::Gaussian { approx, laplace: Some(laplace), ep_trace: Some(trace), vb_trace: None })
        }
        Method::Vb => {
            let vb = vb_config(cfg, seed);
            let laplace = target.laplace()?;
            let a_n = vb.adjustment.unwrap_or_else(|| AdjustedPosterior::default_adjustment(target.data().n()));
            let density = AdjustedPosterior::new(target.clone(), a_n)?;
            let (approx, trace) = crate::vb::vb_run(&density, &laplace.approx, &vb)?;
            Ok(FitOutput::Gaussian { approx, laplace: Some(laplace), ep_trace: None, vb_trace: Some(trace) })
        }
        Method::Mh | Method::Hmc => {
            let (start, pilot_scale) = samplers::target_start(target)?;
            let chain = chain_config(experiment, cfg, pilot_scale, ChainConfig::default().draws, seed);
            let s = if method == Method::Mh {
                samplers::mh_run(target, &start, &chain)?
            } else {
                samplers::hmc_run(target, &start, &chain)?
            };
            Ok(FitOutput::Chain(s))
        }
    }
}

/// Accumulates time only while running, so evaluation work between
/// checkpoints is not charged to the method.
#[derive(Debug, Default)]
pub struct Stopwatch {
    total: Duration,
    since: Option<Instant>,
}

impl Stopwatch {
    pub fn start(&mut self) {
        self.since.get_or_insert_with(Instant::now);
    }

    pub fn stop(&mut self) {
        if let Some(t) = self.since.take() {
            self.total += t.elapsed();
        }
    }

    pub fn seconds(&self) -> f64 {
        (self.total + self.since.map_or(Duration::ZERO, |t| t.elapsed())).as_secs_f64()
    }
}

enum Snapshot {
    Draws(DMatrix<f64>),
    NotReady(String),
}

/// A method that can be advanced in small increments and inspected between
/// them.
trait Anytime {
    /// Does one unit of work; true once the method has finished.
    fn advance(&mut self) -> Result<bool>;
    fn snapshot(&self, count: usize, seed: u64) -> Result<Snapshot>;
    fn extra(&self) -> String;
}

fn gaussian_snapshot(g: Option<&NaturalGaussian>, count: usize, seed: u64) -> Result<Snapshot> {
    match g {
        Some(g) => Ok(Snapshot::Draws(g.sample_with(count, &mut rng::from_seed(seed))?)),
        None => Ok(Snapshot::NotReady("no approximation yet".into())),
    }
}

struct LaplaceRun<'a> {
    target: &'a Target,
    result: Option<LaplaceResult>,
}

impl Anytime for LaplaceRun<'_> {
    fn advance(&mut self) -> Result<bool> {
        self.result = Some(self.target.laplace_or_surrogate()?);
        Ok(true)
    }

    fn snapshot(&self, count: usize, seed: u64) -> Result<Snapshot> {
        gaussian_snapshot(self.result.as_ref().map(|r| &r.approx), count, seed)
    }

    fn extra(&self) -> String {
        self.result.as_ref().map_or_else(String::new, |r| format!("newton_iters={}", r.newton_iters))
    }
}

struct EpelRun<'a> {
    target: &'a Target,
    config: EpConfig,
    runner: Option<EpRunner>,
}

impl Anytime for EpelRun<'_> {
    fn advance(&mut self) -> Result<bool> {
        match &mut self.runner {
            Some(r) => r.step(),
            None => {
                let laplace = self.target.laplace_or_surrogate()?;
                let r = EpRunner::for_target(self.target, &laplace.approx, self.config.clone())?;
                let done = r.is_done();
                self.runner = Some(r);
                Ok(done)
            }
        }
    }

    fn snapshot(&self, count: usize, seed: u64) -> Result<Snapshot> {
        gaussian_snapshot(self.runner.as_ref().map(|r| r.global()), count, seed)
    }

    fn extra(&self) -> String {
        self.runner.as_ref().map_or_else(String::new, |r| {
            format!("cycles={};converged={}", r.state().cycle, r.trace().converged)
        })
    }
}

struct VbRun<'a> {
    density: &'a AdjustedPosterior,
    config: VbConfig,
    runner: Option<VbRunner<'a>>,
    steps: usize,
}

impl Anytime for VbRun<'_> {
    fn advance(&mut self) -> Result<bool> {
        match &mut self.runner {
            Some(r) => {
                r.step()?;
                self.steps += 1;
                Ok(r.is_done())
            }
            None => {
                let laplace = self.density.target().laplace()?;
                let r = VbRunner::new(self.density, &laplace.approx, &self.config)?;
                let done = r.is_done();
                self.runner = Some(r);
                Ok(done)
            }
        }
    }

    fn snapshot(&self, count: usize, seed: u64) -> Result<Snapshot> {
        let current = self.runner.as_ref().map(|r| r.current()).transpose()?;
        gaussian_snapshot(current.as_ref(), count, seed)
    }

    fn extra(&self) -> String {
        format!("steps={}", self.steps)
    }
}

enum Chain<'a> {
    Mh(MhSampler<'a>),
    Hmc(HmcSampler<'a>),
}

struct McmcRun<'a> {
    experiment: Experiment,
    target: &'a Target,
    method: Method,
    config: MethodConfig,
    seed: u64,
    chain: Option<Chain<'a>>,
}

impl<'a> Anytime for McmcRun<'a> {
    fn advance(&mut self) -> Result<bool> {
        match &mut self.chain {
            Some(Chain::Mh(s)) => s.step().map(|_| s.is_done()),
            Some(Chain::Hmc(s)) => s.step().map(|_| s.is_done()),
            None => {
                let (start, pilot_scale) = samplers::target_start(self.target)?;
                let cfg = chain_config(self.experiment, &self.config, pilot_scale, HARNESS_CHAIN_DRAWS, self.seed);
                let density: &'a Target = self.target;
                self.chain = Some(match self.method {
                    Method::Mh => Chain::Mh(MhSampler::new(density, &start, &cfg)?),
                    _ => Chain::Hmc(HmcSampler::new(density, &start, &cfg)?),
                });
                Ok(false)
            }
        }
    }

    fn snapshot(&self, count: usize, _seed: u64) -> Result<Snapshot> {
        let (retained, samples) = match &self.chain {
            Some(Chain::Mh(s)) => (s.retained(), s.samples()),
            Some(Chain::Hmc(s)) => (s.retained(), s.samples()),
            None => return Ok(Snapshot::NotReady("no draws yet".into())),
        };
        if retained < count {
            return Ok(Snapshot::NotReady(format!("{retained} draws retained, {count} needed")));
        }
        Ok(Snapshot::Draws(samplers::thin_and_pool(&samples, 0, count)?.draws))
    }

    fn extra(&self) -> String {
        match &self.chain {
            Some(Chain::Mh(s)) => format!("accept_rate={:.4};draws={}", s.accept_rate(), s.retained()),
            Some(Chain::Hmc(s)) => {
                format!("accept_rate={:.4};draws={};divergences={}", s.accept_rate(), s.retained(), s.divergences())
            }
            None => String::new(),
        }
    }
}

/// Everything a method run needs besides the method itself.
struct RepContext<'a> {
    spec: &'a ExperimentSpec,
    rep: usize,
    gold: &'a DMatrix<f64>,
    threshold: usize,
    checkpoints: &'a [f64],
}

impl RepContext<'_> {
    fn row(&self, method: &str, checkpoint: f64, clock: f64, extra: String) -> ResultRow {
        ResultRow {
            experiment: self.spec.name.name().to_string(),
            method: method.to_string(),
            rep: self.rep,
            checkpoint_seconds: checkpoint,
            clock,
            nbp_count: None,
            threshold: self.threshold,
            pass: false,
            extra,
            skipped: None,
        }
    }

    fn score(&self, mut row: ResultRow, draws: &DMatrix<f64>) -> Result<ResultRow> {
        let r = nbp::cross_match_with_threshold(draws, self.gold, self.threshold, self.spec.standardize)?;
        row.nbp_count = Some(r.cross_count);
        row.pass = r.pass;
        Ok(row)
    }
}

fn skip_reason(e: &Error) -> String {
    match e {
        Error::NonDifferentiable(_) => format!("incompatible: {e}"),
        _ => format!("failed: {e}"),
    }
}

/// Advances `run` through the checkpoints, scoring a snapshot at each one.
fn drive(
    run: &mut dyn Anytime,
    method: Method,
    target: &Target,
    seed: u64,
    ctx: &RepContext<'_>,
    on_row: &mut dyn FnMut(&ResultRow),
) -> Result<Vec<ResultRow>> {
    let mut watch = Stopwatch::default();
    let evals0 = target.el_evals();
    let clock = |watch: &Stopwatch| match ctx.spec.clock {
        Clock::Seconds => watch.seconds(),
        Clock::Evaluations => (target.el_evals() - evals0) as f64,
    };
    let mut done = false;
    let mut failure: Option<String> = None;
    let mut rows = Vec::with_capacity(ctx.checkpoints.len());
    for (k, &checkpoint) in ctx.checkpoints.iter().enumerate() {
        while failure.is_none() && !done && clock(&watch) < checkpoint {
            watch.start();
            let step = run.advance();
            watch.stop();
            match step {
                Ok(d) => done = d,
                Err(e) => failure = Some(skip_reason(&e)),
            }
        }
        let mut row = ctx.row(method.name(), checkpoint, clock(&watch), run.extra());
        row = match &failure {
            Some(reason) => ResultRow { skipped: Some(reason.clone()), ..row },
            None => match run.snapshot(ctx.spec.nbp_draws, rng::derive_seed(seed, &[k as u64]))? {
                Snapshot::Draws(d) => ctx.score(row, &d)?,
                Snapshot::NotReady(reason) => ResultRow { skipped: Some(reason), ..row },
            },
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

fn run_method(
    method: Method,
    base: &Target,
    seed: u64,
    ctx: &RepContext<'_>,
    on_row: &mut dyn FnMut(&ResultRow),
) -> Result<Vec<ResultRow>> {
    // a fresh evaluation counter per method
    let target = base.with_data(base.data().clone())?;
    let experiment = ctx.spec.name;
    let config = &ctx.spec.config;
    match method {
        Method::Laplace => drive(&mut LaplaceRun { target: &target, result: None }, method, &target, seed, ctx, on_row),
        Method::Epel => {
            let mut run = EpelRun { target: &target, config: ep_config(experiment, config, seed), runner: None };
            drive(&mut run, method, &target, seed, ctx, on_row)
        }
        Method::Vb => {
            let vb = vb_config(config, seed);
            let a_n = vb.adjustment.unwrap_or_else(|| AdjustedPosterior::default_adjustment(target.data().n()));
            let density = AdjustedPosterior::new(target.clone(), a_n)?;
            let mut run = VbRun { density: &density, config: vb, runner: None, steps: 0 };
            drive(&mut run, method, &target, seed, ctx, on_row)
        }
        Method::Mh | Method::Hmc => {
            let mut run = McmcRun { experiment, target: &target, method, config: config.clone(), seed, chain: None };
            drive(&mut run, method, &target, seed, ctx, on_row)
        }
    }
}

/// Evenly spaced rows of `draws`, shifted by `offset` of a spacing.
fn spaced_rows(draws: &DMatrix<f64>, count: usize, offset: f64) -> DMatrix<f64> {
    let m = draws.nrows();
    let rows: Vec<usize> =
        (0..count).map(|k| (((k as f64 + offset) * m as f64 / count as f64) as usize).min(m - 1)).collect();
    draws.select_rows(rows.iter())
}

/// Runs every repetition of `spec`; `on_row` sees each row as it is produced.
pub fn run_experiment_with(spec: &ExperimentSpec, on_row: &mut dyn FnMut(&ResultRow)) -> Result<ExperimentOutput> {
    spec.validate()?;
    let checkpoints = spec.checkpoints();
    let threshold = nbp::default_threshold(spec.nbp_draws)?;
    let mut rows = Vec::new();
    let mut seeds = Vec::with_capacity(spec.reps);
    let mut gold_summaries = Vec::with_capacity(spec.reps);
    for rep in 0..spec.reps {
        let rep_seeds = RepSeeds::derive(spec, rep);
        let target = experiment_target(spec.name, rep_seeds.data, spec.smooth)?;
        let gold = gold_standard(spec.name, &target, spec.gold.method, spec.gold.draws, spec.gold.burn_in, rep_seeds.gold)?;
        gold_summaries.push(GoldSummary {
            rep,
            draws: gold.len(),
            accept_rate: gold.accept_rate,
            seconds: gold.seconds,
        });
        let reference = spaced_rows(&gold.draws, spec.nbp_draws, 0.0);
        let ctx = RepContext { spec, rep, gold: &reference, threshold, checkpoints: &checkpoints };
        if spec.control {
            let other = spaced_rows(&gold.draws, spec.nbp_draws, 0.5);
            let row = ctx.row("control", 0.0, 0.0, format!("gold_accept_rate={:.4}", gold.accept_rate));
            let row = ctx.score(row, &other)?;
            on_row(&row);
            rows.push(row);
        }
        for &method in &spec.methods {
            rows.extend(run_method(method, &target, rep_seeds.method(method), &ctx, on_row)?);
        }
        seeds.push(rep_seeds);
    }
    let manifest = Manifest {
        spec: spec.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threshold,
        seeds,
        gold: gold_summaries,
    };
    Ok(ExperimentOutput { rows, manifest })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment_with(spec, &mut |_| {})
}
