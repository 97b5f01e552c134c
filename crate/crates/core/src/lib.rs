//! Bayesian estimation of stochastic volatility models with Gaussian, GED and
//! Student-t errors, using Metropolis-adjusted Langevin (MALA) and simplified
//! manifold MALA samplers, plus Monte Carlo experiments and Value-at-Risk
//! backtesting.

pub mod cli;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod fd;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod special;
pub mod var;

pub use dist::{ErrorFamily, FamilyKind};
pub use error::{Result, SvError};
pub use model::{ModelParams, TransformedParams};

/// Random number generator used throughout.
pub type SvRng = rand_chacha::ChaCha8Rng;
