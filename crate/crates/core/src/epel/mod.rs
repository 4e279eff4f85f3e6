//! Expectation propagation over pooled empirical-likelihood sites.
//!
//! Site 0 is the prior; the remaining sites each hold a contiguous block of
//! records. Every cycle computes all tilted moments against one snapshot of
//! the global approximation and commits the damped updates together. Tilted
//! moments come from a local Laplace approximation during warm-up and from
//! importance sampling afterwards.

mod sites;
mod tilted;

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use sites::{block_ranges, pool_sites, ElBlockSite, GaussianSite, SiteFactor};
pub use tilted::{tilted_is, tilted_laplace, MODE_TOL};

use crate::error::{Error, Result};
use crate::gaussian::{MomentGaussian, NaturalGaussian};
use crate::posterior::{LaplaceResult, Target};
use crate::rng;

/// Halvings of the damping tried before a cycle's commit is abandoned.
pub const MAX_DAMPING_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpConfig {
    pub num_sites: usize,
    pub damping: f64,
    pub warmup_cycles: usize,
    pub is_samples: usize,
    pub max_cycles: usize,
    pub convergence_tol: f64,
    pub ess_floor: f64,
    pub seed: u64,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            num_sites: 6,
            damping: 0.1,
            warmup_cycles: 50,
            is_samples: 5000,
            max_cycles: 100,
            convergence_tol: 1e-4,
            ess_floor: 50.0,
            seed: 0,
        }
    }
}

impl EpConfig {
    /// Tilted moments by Laplace only; the run stops once the updates settle.
    pub fn laplace_only(mut self) -> Self {
        self.warmup_cycles = self.max_cycles;
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.num_sites == 0 {
            return Err(Error::InvalidInput("need at least one site".into()));
        }
        if self.warmup_cycles < self.max_cycles && self.is_samples < 2 * p + 2 {
            return Err(Error::InvalidInput(format!(
                "importance sampling needs at least {} draws, got {}",
                2 * p + 2,
                self.is_samples
            )));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::InvalidInput("convergence tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// How a site's tilted moments were obtained in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltedMethod {
    Laplace,
    Importance,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteDiagnostic {
    pub method: TiltedMethod,
    pub ess: Option<f64>,
    /// Set when the cavity was improper, the ESS fell below the floor, or the
    /// site update was skipped.
    pub flagged: bool,
    /// Why the preferred method was not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One line of the EP trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub max_update: f64,
    pub ess: Vec<Option<f64>>,
    pub alpha_used: f64,
    pub seconds: f64,
}

/// Records of committed cycles only; a cycle whose update could not be made
/// positive definite by halving is counted in `skipped`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpTrace {
    pub records: Vec<CycleRecord>,
    pub skipped: usize,
    pub converged: bool,
}

impl EpTrace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Site approximations and their product.
#[derive(Debug, Clone, PartialEq)]
pub struct EpState {
    pub sites: Vec<NaturalGaussian>,
    pub global: NaturalGaussian,
    pub cycle: usize,
    pub last_max_update: f64,
    pub diagnostics: Vec<SiteDiagnostic>,
}

impl EpState {
    /// Every site starts as `init^(1/D)`, so their product is `init`.
    pub fn split(init: &NaturalGaussian, num_sites: usize) -> Result<Self> {
        if !init.is_proper() {
            return Err(Error::ImproperGaussian);
        }
        let site = init.scale(1.0 / num_sites as f64);
        Ok(Self {
            sites: vec![site; num_sites],
            global: init.clone(),
            cycle: 0,
            last_max_update: f64::INFINITY,
            diagnostics: Vec::new(),
        })
    }

    /// `global / site_i`; may be improper.
    pub fn cavity(&self, i: usize) -> Result<NaturalGaussian> {
        self.global.quotient(&self.sites[i])
    }
}

/// Initial state from a Laplace approximation.
pub fn init_from_laplace(laplace: &LaplaceResult, num_sites: usize) -> Result<EpState> {
    EpState::split(&laplace.approx, num_sites)
}

/// Drives EP cycles one at a time so callers can checkpoint between them.
pub struct EpRunner {
    sites: Vec<Box<dyn SiteFactor>>,
    config: EpConfig,
    state: EpState,
    trace: EpTrace,
    importance_phase: bool,
    done: bool,
    started: Instant,
}

impl EpRunner {
    pub fn new(sites: Vec<Box<dyn SiteFactor>>, init: &NaturalGaussian, config: EpConfig) -> Result<Self> {
        let p = init.dim();
        config.validate(p)?;
        if sites.len() != config.num_sites {
            return Err(Error::InvalidInput(format!(
                "config names {} sites but {} were given",
                config.num_sites,
                sites.len()
            )));
        }
        if let Some(s) = sites.iter().find(|s| s.dim() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: s.dim() });
        }
        let smooth = sites.iter().all(|s| s.smooth());
        let state = EpState::split(init, config.num_sites)?;
        Ok(Self {
            importance_phase: !smooth || config.warmup_cycles == 0,
            done: config.max_cycles == 0,
            sites,
            config,
            state,
            trace: EpTrace::default(),
            started: Instant::now(),
        })
    }

    /// Pools the target's records into sites and starts from `init`.
    pub fn for_target(target: &Target, init: &NaturalGaussian, config: EpConfig) -> Result<Self> {
        let sites = pool_sites(target, config.num_sites)?;
        Self::new(sites, init, config)
    }

    pub fn state(&self) -> &EpState {
        &self.state
    }

    pub fn trace(&self) -> &EpTrace {
        &self.trace
    }

    pub fn config(&self) -> &EpConfig {
        &self.config
    }

    pub fn global(&self) -> &NaturalGaussian {
        &self.state.global
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn in_importance_phase(&self) -> bool {
        self.importance_phase
    }

    fn laplace_only(&self) -> bool {
        self.config.warmup_cycles >= self.config.max_cycles
    }

    /// Proposal for importance sampling at site `i`: the tilted Laplace
    /// approximation, else the cavity, else the global approximation.
    fn proposal(&self, site: &dyn SiteFactor, cavity: &NaturalGaussian) -> NaturalGaussian {
        if cavity.is_proper() {
            if site.smooth() {
                if let Some(q) = tilted_laplace(site, cavity).ok().and_then(|m| NaturalGaussian::from_moments(&m).ok()) {
                    return q;
                }
            }
            return cavity.clone();
        }
        self.state.global.clone()
    }

    fn tilted_importance(&self, i: usize, cavity: &NaturalGaussian) -> Result<(MomentGaussian, f64)> {
        let site = self.sites[i].as_ref();
        let proposal = self.proposal(site, cavity);
        let mut rng = rng::stream(self.config.seed, &[self.state.cycle as u64, i as u64]);
        tilted_is(site, cavity, &proposal, self.config.is_samples, &mut rng)
    }

    fn tilted(&self, i: usize, cavity: &NaturalGaussian) -> Result<(MomentGaussian, SiteDiagnostic)> {
        let improper = !cavity.is_proper();
        let mut note = improper.then(|| "improper cavity".to_string());
        if !self.importance_phase && !improper {
            match tilted_laplace(self.sites[i].as_ref(), cavity) {
                Ok(m) => {
                    let diag = SiteDiagnostic { method: TiltedMethod::Laplace, ess: None, flagged: false, note: None };
                    return Ok((m, diag));
                }
                Err(Error::LaplaceFailed(why)) => note = Some(why),
                Err(e) => return Err(e),
            }
        }
        let (m, ess) = self.tilted_importance(i, cavity)?;
        let flagged = improper || ess < self.config.ess_floor;
        Ok((m, SiteDiagnostic { method: TiltedMethod::Importance, ess: Some(ess), flagged, note }))
    }

    /// Runs one cycle. Returns `true` once the run has finished.
    pub fn step(&mut self) -> Result<bool> {
        if self.done {
            return Ok(true);
        }
        let alpha = self.config.damping;
        let global = self.state.global.clone();
        let mut deltas = Vec::with_capacity(self.sites.len());
        let mut diagnostics = Vec::with_capacity(self.sites.len());
        for i in 0..self.sites.len() {
            let cavity = self.state.cavity(i)?;
            let outcome = self.tilted(i, &cavity).and_then(|(m, d)| Ok((NaturalGaussian::from_moments(&m)?, d)));
            match outcome {
                Ok((eta, diag)) => {
                    deltas.push(Some(eta.quotient(&global)?.scale(alpha)));
                    diagnostics.push(diag);
                }
                Err(
                    e @ (Error::DisjointProposal
                    | Error::ImproperGaussian
                    | Error::LaplaceFailed(_)
                    | Error::SupportBoundary { .. }
                    | Error::OutOfSupport
                    | Error::DegenerateSpan),
                ) => {
                    deltas.push(None);
                    let note = Some(e.to_string());
                    diagnostics.push(SiteDiagnostic { method: TiltedMethod::Failed, ess: None, flagged: true, note });
                }
                Err(e) => return Err(e),
            }
        }
        if deltas.iter().all(Option::is_none) {
            return Err(Error::AllSitesFailed(self.state.cycle));
        }

        let total = deltas.iter().flatten().try_fold(NaturalGaussian::zeros(global.dim()), |acc, d| acc.product(d))?;
        let mut scale = 1.0;
        let mut committed = false;
        for _ in 0..=MAX_DAMPING_HALVINGS {
            let candidate = global.product(&total.scale(scale))?;
            if candidate.is_proper() {
                for (site, delta) in self.state.sites.iter_mut().zip(&deltas) {
                    if let Some(d) = delta {
                        *site = site.product(&d.scale(scale))?;
                    }
                }
                self.state.global = candidate;
                committed = true;
                break;
            }
            scale *= 0.5;
        }
        let max_update = if committed {
            deltas.iter().flatten().map(|d| d.norm() * scale).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };

        self.state.last_max_update = max_update;
        self.state.diagnostics = diagnostics;
        if committed {
            self.trace.records.push(CycleRecord {
                cycle: self.state.cycle,
                max_update,
                ess: self.state.diagnostics.iter().map(|d| d.ess).collect(),
                alpha_used: alpha * scale,
                seconds: self.started.elapsed().as_secs_f64(),
            });
        } else {
            self.trace.skipped += 1;
        }
        self.state.cycle += 1;

        let settled = committed && max_update <= self.config.convergence_tol * self.state.global.norm();
        if settled {
            if self.importance_phase || self.laplace_only() {
                self.trace.converged = true;
                self.done = true;
            } else {
                self.importance_phase = true;
            }
        }
        if !self.importance_phase && self.state.cycle >= self.config.warmup_cycles {
            self.importance_phase = true;
        }
        if self.state.cycle >= self.config.max_cycles {
            self.done = true;
        }
        Ok(self.done)
    }

    /// Runs to completion.
    pub fn run(mut self) -> Result<(NaturalGaussian, EpTrace)> {
        while !self.step()? {}
        Ok((self.state.global, self.trace))
    }
}

/// EPEL on `target`, initialized at its Laplace approximation (of the smooth
/// surrogate when the constraint is not differentiable).
pub fn run(target: &Target, config: EpConfig) -> Result<(NaturalGaussian, EpTrace)> {
    let laplace = target.laplace_or_surrogate()?;
    EpRunner::for_target(target, &laplace.approx, config)?.run()
}

/// Posterior mean of an EP result.
pub fn mean(global: &NaturalGaussian) -> Result<DVector<f64>> {
    global.mean()
}
