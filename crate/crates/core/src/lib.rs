//! Bayesian empirical likelihood with expectation propagation.
//!
//! The posterior `p(theta) * EL(theta)` replaces a parametric likelihood with
//! the profile empirical likelihood of a moment constraint `E[h(z, theta)] = 0`.
//! [`epel`] approximates it with a Gaussian by expectation propagation over
//! pooled data sites. [`posterior`] (Laplace), [`vb`] (variational Bayes on the
//! adjusted EL) and [`samplers`] (HMC, random-walk MH) provide baselines, and
//! [`nbp`] scores any approximation against a reference sample with the
//! cross-match statistic on an optimal non-bipartite matching.
//!
//! Runnable examples for each capability live in `examples/`.

pub mod elcore;
pub mod epel;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod nbp;
pub mod posterior;
pub mod rng;
pub mod samplers;
pub mod samples;
pub mod vb;

pub use error::{Error, Result};
pub use gaussian::{MomentGaussian, NaturalGaussian};
pub use posterior::{LaplaceResult, LogDensity, Target};
pub use samples::SampleMatrix;
