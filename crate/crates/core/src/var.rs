//! One-step-ahead predictive Value-at-Risk and rolling backtests.
//!
//! For each kept draw j, h_{n+1} = φ_j h_n^{(j)} + σ_j z is drawn once and L
//! errors ε_k give returns β_j exp(h_{n+1}/2) ε_k. The draw-level VaR is the
//! negated type-7 (1 − level) sample quantile of those returns, and the
//! forecast is the average over draws.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_errors, FamilyKind};
use crate::error::{Result, SvError};
use crate::model::ModelParams;
use crate::sampler::{default_init, run_chain, ChainInit, ChainOutput, McmcConfig};
use crate::SvRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarForecast {
    pub level: f64,
    pub var_point: f64,
    /// Number of posterior draws used.
    pub draws: usize,
    /// Error draws per posterior draw.
    pub inner: usize,
}

/// The posterior draws a forecast needs: θ and h_n for each kept draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws<'a> {
    pub theta: &'a [ModelParams],
    pub h_last: &'a [f64],
}

impl<'a> From<&'a ChainOutput> for PredictiveDraws<'a> {
    fn from(c: &'a ChainOutput) -> Self {
        PredictiveDraws { theta: &c.theta_draws, h_last: &c.h_last }
    }
}

/// Type-7 quantile of an unsorted buffer via two selections, reordering it.
fn select_quantile(buf: &mut [f64], prob: f64) -> f64 {
    let h = (buf.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let len = buf.len();
    let (_, &mut a, upper) = buf.select_nth_unstable_by(lo, |x, y| x.total_cmp(y));
    if lo + 1 >= len || h == lo as f64 {
        return a;
    }
    let b = upper.iter().copied().fold(f64::INFINITY, f64::min);
    a + (h - lo as f64) * (b - a)
}

/// Predictive VaR at `level` from posterior draws, with `inner` error draws
/// per posterior draw.
pub fn var_one_step<R: Rng + ?Sized>(draws: PredictiveDraws<'_>, level: f64, inner: usize, rng: &mut R) -> Result<VarForecast> {
    if draws.theta.is_empty() {
        return Err(SvError::EmptyChain);
    }
    if draws.theta.len() != draws.h_last.len() {
        return Err(SvError::Dimension { expected: draws.theta.len(), got: draws.h_last.len() });
    }
    if !(level > 0.5 && level < 1.0) {
        return Err(SvError::Domain(format!("level must lie in (0.5, 1), got {level}")));
    }
    if inner == 0 {
        return Err(SvError::Domain("need at least one inner draw".into()));
    }
    let mut eps = vec![0.0; inner];
    let mut total = 0.0;
    for (p, &hn) in draws.theta.iter().zip(draws.h_last) {
        let z: f64 = rng.sample(StandardNormal);
        let h_next = p.phi * hn + p.sigma * z;
        let scale = p.beta * (0.5 * h_next).exp();
        sample_errors(&p.family, rng, &mut eps);
        for e in eps.iter_mut() {
            *e *= scale;
        }
        total += -select_quantile(&mut eps, 1.0 - level);
    }
    Ok(VarForecast { level, var_point: total / draws.theta.len() as f64, draws: draws.theta.len(), inner })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Number of one-step forecasts (the last `windows` observations).
    pub windows: usize,
    pub level: f64,
    pub inner: usize,
    /// Chain settings for the first window and for cold starts.
    pub initial: McmcConfig,
    /// Chain settings for warm-started windows.
    pub warm: McmcConfig,
    pub warm_start: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarWindow {
    /// 0-based position of the forecast return in the series.
    pub index: usize,
    pub ret: f64,
    pub var: f64,
    pub exceeded: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBacktest {
    pub level: f64,
    pub windows: Vec<VarWindow>,
    pub exceedance_count: usize,
    pub failed_windows: usize,
}

impl VarBacktest {
    pub fn from_windows(level: f64, windows: Vec<VarWindow>) -> Self {
        let exceedance_count = count_exceedances(&windows);
        let failed_windows = windows.iter().filter(|w| w.error.is_some()).count();
        VarBacktest { level, windows, exceedance_count, failed_windows }
    }

    /// Expected exceedances under correct coverage.
    pub fn expected_exceedances(&self) -> f64 {
        (self.windows.len() - self.failed_windows) as f64 * (1.0 - self.level)
    }
}

/// Returns strictly below −VaR among the successful windows.
pub fn count_exceedances(windows: &[VarWindow]) -> usize {
    windows.iter().filter(|w| w.error.is_none() && w.ret < -w.var).count()
}

fn window_rng(seed: u64, i: usize) -> SvRng {
    let mut rng = SvRng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

struct WindowFit {
    var: f64,
    chain: ChainOutput,
}

fn fit_window(y: &[f64], init: &ChainInit, cfg: &McmcConfig, level: f64, inner: usize, rng: &mut SvRng) -> Result<WindowFit> {
    let chain = run_chain(y, init, cfg, rng)?;
    let f = var_one_step(PredictiveDraws::from(&chain), level, inner, rng)?;
    if !f.var_point.is_finite() {
        return Err(SvError::NonFinite("VaR forecast".into()));
    }
    Ok(WindowFit { var: f.var_point, chain })
}

fn record(index: usize, ret: f64, fit: &Result<WindowFit>) -> VarWindow {
    match fit {
        Ok(w) => VarWindow { index, ret, var: w.var, exceeded: ret < -w.var, error: None },
        Err(e) => VarWindow { index, ret, var: f64::NAN, exceeded: false, error: Some(e.to_string()) },
    }
}

/// Starting point for the next window: last posterior means and the final
/// h extended by its conditional mean.
fn warm_init(prev: &ChainOutput, kind: FamilyKind) -> Result<ChainInit> {
    let params = prev.posterior_mean()?;
    params.validate()?;
    if kind != params.kind() {
        return Err(SvError::Config("family changed between windows".into()));
    }
    let mut h = prev.final_h.clone();
    let last = *h.last().ok_or(SvError::EmptyChain)?;
    h.push(params.phi * last);
    Ok(ChainInit { h, params })
}

/// Rolling one-step VaR backtest: window i fits on y[..n−K+i] and forecasts
/// y[n−K+i]. Failed windows are flagged and skipped.
pub fn rolling_backtest(y: &[f64], kind: FamilyKind, cfg: &BacktestConfig) -> Result<VarBacktest> {
    let n = y.len();
    let k = cfg.windows;
    if k == 0 || n < k + 2 {
        return Err(SvError::Domain(format!("need more than {k} + 1 observations, got {n}")));
    }
    cfg.initial.validate()?;
    cfg.warm.validate()?;
    let start = n - k;

    if !cfg.warm_start {
        let windows = (0..k)
            .into_par_iter()
            .map(|i| {
                let fit_y = &y[..start + i];
                let mut rng = window_rng(cfg.seed, i);
                let fit = fit_window(fit_y, &default_init(fit_y, kind), &cfg.initial, cfg.level, cfg.inner, &mut rng);
                record(start + i, y[start + i], &fit)
            })
            .collect();
        return Ok(VarBacktest::from_windows(cfg.level, windows));
    }

    let mut windows = Vec::with_capacity(k);
    let mut prev: Option<ChainOutput> = None;
    for i in 0..k {
        let fit_y = &y[..start + i];
        let mut rng = window_rng(cfg.seed, i);
        let warm = prev.as_ref().and_then(|c| warm_init(c, kind).ok());
        let fit = match warm {
            Some(init) => {
                let prev_chain = prev.as_ref().expect("warm start has a previous chain");
                let cfg_w = McmcConfig {
                    eps_vol: prev_chain.final_eps_vol,
                    eps_par: prev_chain.final_eps_par,
                    ..cfg.warm.clone()
                };
                fit_window(fit_y, &init, &cfg_w, cfg.level, cfg.inner, &mut rng)
            }
            None => fit_window(fit_y, &default_init(fit_y, kind), &cfg.initial, cfg.level, cfg.inner, &mut rng),
        };
        windows.push(record(start + i, y[start + i], &fit));
        if let Ok(w) = fit {
            prev = Some(w.chain);
        }
    }
    Ok(VarBacktest::from_windows(cfg.level, windows))
}
