//! The two-block sweep over (h, ξ) and chain orchestration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adapt::{Phase, StepSizeAdapter, DEFAULT_TARGET_ACCEPT};
use super::kernels::{mala_step, mmala_step, LangevinPoint, LogDensity, ManifoldDensity, ManifoldPoint, StepOutcome};
use crate::diagnostics::P2Quantile;
use crate::dist::{ErrorFamily, FamilyKind};
use crate::error::{check_len, Result, SvError};
use crate::geometry::{metric_h, metric_theta_factor, vol_log_density_and_grad, Observations, ParamBlock};
use crate::linalg::{DenseCholesky, TridiagCholesky};
use crate::model::{from_unconstrained, to_unconstrained, ModelParams, TransformedParams};

/// Which kernel updates each block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// MALA for both h and ξ.
    Mala,
    /// MALA for h, simplified MMALA for ξ.
    Hybrid,
    /// Simplified MMALA for both blocks, using the tridiagonal metric for h.
    Manifold,
}

impl std::str::FromStr for Scheme {
    type Err = SvError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mala" => Ok(Scheme::Mala),
            "hybrid" | "mmala" => Ok(Scheme::Hybrid),
            "manifold" => Ok(Scheme::Manifold),
            other => Err(SvError::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Mala => "mala",
            Scheme::Hybrid => "hybrid",
            Scheme::Manifold => "manifold",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub eps_vol: f64,
    pub eps_par: f64,
    pub seed: u64,
    pub adapt: bool,
    pub target_accept_vol: f64,
    pub target_accept_par: f64,
    pub scheme: Scheme,
    /// Keep every kept h path, not only the running summaries.
    pub store_h: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 20_000,
            burn_in: 10_000,
            thin: 1,
            eps_vol: 0.05,
            eps_par: 0.5,
            seed: 1,
            adapt: true,
            target_accept_vol: DEFAULT_TARGET_ACCEPT,
            target_accept_par: DEFAULT_TARGET_ACCEPT,
            scheme: Scheme::Hybrid,
            store_h: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(SvError::Config(format!(
                "need 0 <= burn_in < n_iter, got burn_in={} n_iter={}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(SvError::Config("thin must be >= 1".into()));
        }
        for (name, e) in [("eps_vol", self.eps_vol), ("eps_par", self.eps_par)] {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(SvError::Config(format!("{name} must be a finite non-negative number, got {e}")));
            }
        }
        for (name, r) in [("target_accept_vol", self.target_accept_vol), ("target_accept_par", self.target_accept_par)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(SvError::Config(format!("{name} must lie in (0, 1), got {r}")));
            }
        }
        Ok(())
    }

    /// ⌊(n_iter − burn_in)/thin⌋.
    pub fn kept_draws(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Starting point of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInit {
    pub h: Vec<f64>,
    pub params: ModelParams,
}

/// Prior medians of θ.
pub fn prior_median(kind: FamilyKind) -> ModelParams {
    let family = match kind {
        FamilyKind::Gaussian => ErrorFamily::Gaussian,
        FamilyKind::Ged => ErrorFamily::Ged { nu: 2.383_297_39 },
        FamilyKind::StudentT => ErrorFamily::StudentT { nu: 6.079_441_54 },
    };
    ModelParams { beta: std::f64::consts::LN_2, phi: 0.886_488_45, sigma: 0.231_349_89, family }
}

/// θ at the prior medians and h_t = ln(y_t²/β₀² + 10⁻⁴).
pub fn default_init(y: &[f64], kind: FamilyKind) -> ChainInit {
    let params = prior_median(kind);
    let b2 = params.beta * params.beta;
    let h = y.iter().map(|v| (v * v / b2 + 1e-4).ln()).collect();
    ChainInit { h, params }
}

/// Per-time-point running mean and median of the kept h draws.
#[derive(Debug, Clone)]
pub struct PathSummary {
    count: usize,
    sum: Vec<f64>,
    median: Vec<P2Quantile>,
}

impl PathSummary {
    fn new(n: usize) -> Self {
        PathSummary { count: 0, sum: vec![0.0; n], median: vec![P2Quantile::new(0.5); n] }
    }

    fn push(&mut self, h: &[f64]) {
        self.count += 1;
        for ((s, m), v) in self.sum.iter_mut().zip(&mut self.median).zip(h) {
            *s += v;
            m.push(*v);
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }

    pub fn median(&self) -> Vec<f64> {
        self.median.iter().map(|m| m.estimate()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub kind: FamilyKind,
    pub scheme: Scheme,
    /// Iteration index (0-based) of each kept draw.
    pub iters: Vec<usize>,
    /// Kept θ draws on the natural scale.
    pub theta_draws: Vec<ModelParams>,
    /// Whether the h and ξ moves accepted at each kept iteration.
    pub accept_vol_flags: Vec<bool>,
    pub accept_par_flags: Vec<bool>,
    /// h_n at each kept draw.
    pub h_last: Vec<f64>,
    pub h_summary: PathSummary,
    pub h_draws: Option<Vec<Vec<f64>>>,
    /// Acceptance fractions over the post-burn-in iterations.
    pub accept_rate_vol: f64,
    pub accept_rate_par: f64,
    /// Jitter shifts needed to factor metrics.
    pub jitter_count: u64,
    /// Proposals rejected for a non-finite density, gradient or metric.
    pub invalid_vol: u64,
    pub invalid_par: u64,
    pub final_h: Vec<f64>,
    pub final_params: ModelParams,
    pub final_eps_vol: f64,
    pub final_eps_par: f64,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.theta_draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_draws.is_empty()
    }

    /// Column of kept draws: 0 β, 1 φ, 2 σ, 3 ν.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.theta_draws.iter().map(|p| p.as_array()[j]).collect()
    }

    /// Posterior means of θ as model parameters.
    pub fn posterior_mean(&self) -> Result<ModelParams> {
        if self.is_empty() {
            return Err(SvError::EmptyChain);
        }
        let m = |j: usize| {
            let c = self.column(j);
            c.iter().sum::<f64>() / c.len() as f64
        };
        let family = ErrorFamily::new(self.kind, if self.kind == FamilyKind::Gaussian { f64::NAN } else { m(3) });
        Ok(ModelParams { beta: m(0), phi: m(1), sigma: m(2), family })
    }
}

/// The h block: ln f(y, h | θ) with θ fixed. The metric does not depend on h.
pub struct VolTarget<'a> {
    obs: &'a Observations,
    params: ModelParams,
    factor: Option<TridiagCholesky>,
}

impl<'a> VolTarget<'a> {
    pub fn new(obs: &'a Observations, params: ModelParams, with_metric: bool) -> Result<Self> {
        let factor = if with_metric { Some(metric_h(obs.len(), &params)?.cholesky()?) } else { None };
        Ok(VolTarget { obs, params, factor })
    }
}

impl LogDensity for VolTarget<'_> {
    fn dim(&self) -> usize {
        self.obs.len()
    }
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = vol_log_density_and_grad(self.obs, x, &self.params, grad);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

impl ManifoldDensity for VolTarget<'_> {
    type Factor = TridiagCholesky;
    fn metric_factor(&self, _x: &[f64]) -> Result<(TridiagCholesky, u32)> {
        match &self.factor {
            Some(f) => Ok((f.clone(), 0)),
            None => Ok((metric_h(self.obs.len(), &self.params)?.cholesky()?, 0)),
        }
    }
}

/// The ξ block: transformed posterior with h fixed.
pub struct ParamTarget {
    block: ParamBlock,
}

impl ParamTarget {
    pub fn new(obs: &Observations, h: &[f64], kind: FamilyKind) -> Self {
        ParamTarget { block: ParamBlock::from_observations(obs, h, kind) }
    }
}

impl LogDensity for ParamTarget {
    fn dim(&self) -> usize {
        self.block.dim()
    }
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.block.log_target_and_grad(x, grad)
    }
}

impl ManifoldDensity for ParamTarget {
    type Factor = DenseCholesky;
    fn metric_factor(&self, x: &[f64]) -> Result<(DenseCholesky, u32)> {
        metric_theta_factor(x, self.block.kind(), self.block.n())
    }
}

/// Mutable state of a chain between sweeps.
#[derive(Debug, Clone)]
pub struct SweepState {
    pub h: Vec<f64>,
    pub xi: Vec<f64>,
    pub kind: FamilyKind,
}

impl SweepState {
    pub fn new(init: &ChainInit) -> Result<Self> {
        init.params.validate()?;
        let kind = init.params.kind();
        Ok(SweepState { h: init.h.clone(), xi: to_unconstrained(&init.params).to_vec(kind), kind })
    }

    pub fn params(&self) -> ModelParams {
        // xi always has the length implied by kind
        let t = TransformedParams::from_slice(&self.xi, self.kind).expect("state dimension");
        from_unconstrained(&t, self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOutcome {
    pub vol: StepOutcome,
    pub par: StepOutcome,
}

/// One sweep: update h given θ, then ξ given h.
pub fn hybrid_sweep<R: Rng + ?Sized>(
    obs: &Observations,
    state: &mut SweepState,
    scheme: Scheme,
    eps_vol: f64,
    eps_par: f64,
    rng: &mut R,
) -> Result<SweepOutcome> {
    check_len(obs.len(), state.h.len())?;
    let params = state.params();
    let vol_target = VolTarget::new(obs, params, scheme == Scheme::Manifold)?;
    let vol = match scheme {
        Scheme::Manifold => {
            let mut pt = ManifoldPoint::new(&vol_target, std::mem::take(&mut state.h))?;
            let o = mmala_step(&vol_target, &mut pt, eps_vol, rng);
            state.h = pt.point.x;
            o
        }
        Scheme::Mala | Scheme::Hybrid => {
            let mut pt = LangevinPoint::new(&vol_target, std::mem::take(&mut state.h));
            let o = mala_step(&vol_target, &mut pt, eps_vol, rng);
            state.h = pt.x;
            o
        }
    };

    let par_target = ParamTarget::new(obs, &state.h, state.kind);
    let par = match scheme {
        Scheme::Mala => {
            let mut pt = LangevinPoint::new(&par_target, std::mem::take(&mut state.xi));
            let o = mala_step(&par_target, &mut pt, eps_par, rng);
            state.xi = pt.x;
            o
        }
        Scheme::Hybrid | Scheme::Manifold => {
            let mut pt = ManifoldPoint::new(&par_target, std::mem::take(&mut state.xi))?;
            let o = mmala_step(&par_target, &mut pt, eps_par, rng);
            state.xi = pt.point.x;
            o
        }
    };
    Ok(SweepOutcome { vol, par })
}

/// ln f(y, h | θ) π(θ) |J| at a starting point.
pub fn initial_log_target(obs: &Observations, init: &ChainInit) -> Result<f64> {
    let state = SweepState::new(init)?;
    check_len(obs.len(), state.h.len())?;
    let mut g = vec![0.0; state.xi.len()];
    let v = ParamTarget::new(obs, &state.h, state.kind).log_density_and_grad(&state.xi, &mut g);
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(SvError::NonFinite(format!("initial log target {v}")));
    }
    Ok(v)
}

/// Runs a chain from `init`, applying burn-in, thinning and step-size
/// adaptation (burn-in only).
pub fn run_chain<R: Rng + ?Sized>(y: &[f64], init: &ChainInit, cfg: &McmcConfig, rng: &mut R) -> Result<ChainOutput> {
    cfg.validate()?;
    let n = y.len();
    if n < 2 {
        return Err(SvError::Domain("need at least two observations".into()));
    }
    check_len(n, init.h.len())?;
    if y.iter().chain(&init.h).any(|v| !v.is_finite()) {
        return Err(SvError::NonFinite("data or initial h".into()));
    }
    let obs = Observations::new(y);
    initial_log_target(&obs, init)?;
    let mut state = SweepState::new(init)?;
    let kind = state.kind;

    let mut adapt_vol = StepSizeAdapter::new(cfg.eps_vol, cfg.target_accept_vol, cfg.adapt);
    let mut adapt_par = StepSizeAdapter::new(cfg.eps_par, cfg.target_accept_par, cfg.adapt);

    let kept = cfg.kept_draws();
    let mut out = ChainOutput {
        kind,
        scheme: cfg.scheme,
        iters: Vec::with_capacity(kept),
        theta_draws: Vec::with_capacity(kept),
        accept_vol_flags: Vec::with_capacity(kept),
        accept_par_flags: Vec::with_capacity(kept),
        h_last: Vec::with_capacity(kept),
        h_summary: PathSummary::new(n),
        h_draws: cfg.store_h.then(|| Vec::with_capacity(kept)),
        accept_rate_vol: 0.0,
        accept_rate_par: 0.0,
        jitter_count: 0,
        invalid_vol: 0,
        invalid_par: 0,
        final_h: Vec::new(),
        final_params: init.params,
        final_eps_vol: cfg.eps_vol,
        final_eps_par: cfg.eps_par,
    };
    let (mut acc_vol, mut acc_par) = (0usize, 0usize);

    for it in 0..cfg.n_iter {
        let phase = if it < cfg.burn_in { Phase::Burnin(it) } else { Phase::Sampling };
        let o = hybrid_sweep(&obs, &mut state, cfg.scheme, adapt_vol.eps(), adapt_par.eps(), rng)?;
        adapt_vol.observe(o.vol.accept_prob(), phase);
        adapt_par.observe(o.par.accept_prob(), phase);
        out.jitter_count += u64::from(o.vol.jitter) + u64::from(o.par.jitter);
        out.invalid_vol += u64::from(o.vol.invalid);
        out.invalid_par += u64::from(o.par.invalid);
        if phase == Phase::Sampling {
            acc_vol += usize::from(o.vol.accepted);
            acc_par += usize::from(o.par.accepted);
            if (it - cfg.burn_in + 1) % cfg.thin == 0 {
                out.iters.push(it);
                out.theta_draws.push(state.params());
                out.accept_vol_flags.push(o.vol.accepted);
                out.accept_par_flags.push(o.par.accepted);
                out.h_last.push(state.h[n - 1]);
                out.h_summary.push(&state.h);
                if let Some(d) = out.h_draws.as_mut() {
                    d.push(state.h.clone());
                }
            }
        }
    }
    let sampled = (cfg.n_iter - cfg.burn_in) as f64;
    out.accept_rate_vol = acc_vol as f64 / sampled;
    out.accept_rate_par = acc_par as f64 / sampled;
    out.final_params = state.params();
    out.final_h = state.h;
    out.final_eps_vol = adapt_vol.eps();
    out.final_eps_par = adapt_par.eps();
    Ok(out)
}
