//! Langevin Metropolis–Hastings kernels, step-size adaptation and the
//! blocked sampler for (h, θ).

pub mod adapt;
pub mod chain;
pub mod kernels;

pub use adapt::{adapt_step_size, Phase, StepSizeAdapter, DEFAULT_TARGET_ACCEPT};
pub use chain::{
    default_init, hybrid_sweep, prior_median, run_chain, ChainInit, ChainOutput, McmcConfig, ParamTarget, PathSummary,
    Scheme, SweepOutcome, SweepState, VolTarget,
};
pub use kernels::{
    mala_log_alpha, mala_step, mmala_log_alpha, mmala_step, LangevinPoint, LogDensity, ManifoldDensity, ManifoldPoint,
    StepOutcome,
};
