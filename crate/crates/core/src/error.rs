use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("improper Gaussian: precision is not positive definite")]
    ImproperGaussian,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter lies outside the empirical likelihood support")]
    OutOfSupport,

    #[error("degenerate constraint span: weighted scatter of h is singular")]
    DegenerateSpan,

    #[error("support boundary too close for finite differences at step {step:e}")]
    SupportBoundary { step: f64 },

    #[error("model `{0}` is not differentiable; use an importance-sampling or MH route")]
    NonDifferentiable(String),

    #[error("Laplace approximation failed: {0}")]
    LaplaceFailed(String),

    #[error("importance proposal is disjoint from the tilted mass (all weights zero)")]
    DisjointProposal,

    #[error("perfect matching needs an even number of points, got {0}")]
    OddPointCount(usize),

    #[error("sample sets differ: {0}")]
    UnequalSamples(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("every site failed in cycle {0}")]
    AllSitesFailed(usize),

    #[error("dataset error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
