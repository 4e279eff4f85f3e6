use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::epel::EpConfig;
use crate::error::{Error, Result};
use crate::models::Experiment;
use crate::samplers::ChainConfig;
use crate::vb::VbConfig;

/// Default checkpoint grid, in clock units.
pub const DEFAULT_CHECKPOINTS: [f64; 8] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

/// Approximation methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Epel,
    Laplace,
    Vb,
    Hmc,
    Mh,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Epel, Method::Laplace, Method::Vb, Method::Hmc, Method::Mh];

    pub fn name(self) -> &'static str {
        match self {
            Method::Epel => "epel",
            Method::Laplace => "laplace",
            Method::Vb => "vb",
            Method::Hmc => "hmc",
            Method::Mh => "mh",
        }
    }

    pub fn is_mcmc(self) -> bool {
        matches!(self, Method::Hmc | Method::Mh)
    }

    fn tag(self) -> u64 {
        Method::ALL.iter().position(|&m| m == self).expect("listed method") as u64 + 1
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// What the checkpoint schedule and budget are measured in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Method wall-clock seconds, excluding evaluation overhead.
    #[default]
    Seconds,
    /// EL evaluations; makes a run reproducible byte for byte.
    Evaluations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoldSpec {
    pub method: Method,
    pub draws: usize,
    pub burn_in: usize,
}

impl Default for GoldSpec {
    fn default() -> Self {
        Self { method: Method::Mh, draws: 1_000_000, burn_in: 10_000 }
    }
}

/// Per-method configuration overrides, keyed like the config structs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub epel: Option<EpConfig>,
    pub vb: Option<VbConfig>,
    pub chain: Option<ChainConfig>,
}

fn default_reps() -> usize {
    10
}

fn default_budget() -> f64 {
    100.0
}

fn default_checkpoints() -> Vec<f64> {
    DEFAULT_CHECKPOINTS.to_vec()
}

fn default_nbp_draws() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

/// One cost-accuracy experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: Experiment,
    pub methods: Vec<Method>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_budget")]
    pub budget_seconds: f64,
    #[serde(default = "default_checkpoints")]
    pub checkpoint_schedule: Vec<f64>,
    #[serde(default)]
    pub gold: GoldSpec,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub clock: Clock,
    /// Draws per sample in each cross-match.
    #[serde(default = "default_nbp_draws")]
    pub nbp_draws: usize,
    #[serde(default)]
    pub standardize: bool,
    /// Also score two disjoint gold subsamples against each other.
    #[serde(default = "default_true")]
    pub control: bool,
    /// One dataset for every repetition instead of one per repetition.
    #[serde(default)]
    pub data_seed: Option<u64>,
    /// Replace a non-smooth constraint by its smooth surrogate everywhere.
    #[serde(default)]
    pub smooth: bool,
    #[serde(default)]
    pub config: MethodConfig,
}

impl ExperimentSpec {
    pub fn new(name: Experiment, methods: Vec<Method>) -> Self {
        Self {
            name,
            methods,
            reps: default_reps(),
            budget_seconds: default_budget(),
            checkpoint_schedule: default_checkpoints(),
            gold: GoldSpec::default(),
            master_seed: 0,
            clock: Clock::default(),
            nbp_draws: default_nbp_draws(),
            standardize: false,
            control: true,
            data_seed: None,
            smooth: false,
            config: MethodConfig::default(),
        }
    }

    /// Full-scale repetition count and gold-standard length.
    pub fn full_scale(mut self) -> Self {
        self.reps = 50;
        self.gold.draws = match self.gold.method {
            Method::Hmc => 2_000_000,
            _ => 10_000_000,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidInput(msg));
        if self.reps == 0 {
            return invalid("reps must be at least 1".into());
        }
        if self.methods.is_empty() {
            return invalid("no methods listed".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return invalid(format!("method `{m}` listed twice"));
            }
        }
        if !self.gold.method.is_mcmc() {
            return invalid(format!("gold standard must be mh or hmc, got `{}`", self.gold.method));
        }
        if self.checkpoint_schedule.is_empty() {
            return invalid("checkpoint schedule is empty".into());
        }
        if self.checkpoint_schedule.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return invalid("checkpoints must be positive".into());
        }
        if self.checkpoint_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("checkpoints must be increasing".into());
        }
        if !(self.budget_seconds >= self.checkpoint_schedule[0]) {
            return invalid("budget ends before the first checkpoint".into());
        }
        if self.nbp_draws == 0 {
            return invalid("nbp_draws must be positive".into());
        }
        let needed = if self.control { 2 * self.nbp_draws } else { self.nbp_draws };
        if self.gold.draws < needed {
            return invalid(format!("gold standard needs at least {needed} draws"));
        }
        Ok(())
    }

    /// Checkpoints within the budget.
    pub fn checkpoints(&self) -> Vec<f64> {
        self.checkpoint_schedule.iter().copied().filter(|&c| c <= self.budget_seconds).collect()
    }
}

/// Seeds used in one repetition, all derived from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepSeeds {
    pub rep: usize,
    pub data: u64,
    pub gold: u64,
    pub methods: Vec<(Method, u64)>,
}

const DATA_TAG: u64 = 0x64617461;
const GOLD_TAG: u64 = 0x676f6c64;

impl RepSeeds {
    pub fn derive(spec: &ExperimentSpec, rep: usize) -> Self {
        let master = spec.master_seed;
        let r = rep as u64;
        Self {
            rep,
            data: spec.data_seed.unwrap_or_else(|| crate::rng::derive_seed(master, &[r, DATA_TAG])),
            gold: crate::rng::derive_seed(master, &[r, GOLD_TAG]),
            methods: spec.methods.iter().map(|&m| (m, crate::rng::derive_seed(master, &[r, m.tag()]))).collect(),
        }
    }

    pub fn method(&self, method: Method) -> u64 {
        self.methods.iter().find(|(m, _)| *m == method).map(|&(_, s)| s).expect("seed for every listed method")
    }
}
