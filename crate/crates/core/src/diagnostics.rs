//! Chain diagnostics: autocorrelation, effective sample size, summaries,
//! sample quantiles, kernel density grids and a streaming quantile sketch.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelations ρ̂₀..ρ̂_max_lag (biased autocovariance, divisor N).
/// A constant series yields 1 followed by zeros.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(SvError::Domain(format!("series of length {n} too short for lag {max_lag}")));
    }
    let m = mean(series);
    let dev: Vec<f64> = series.iter().map(|v| v - m).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    let mut out = vec![0.0; max_lag + 1];
    out[0] = 1.0;
    if c0 <= 0.0 {
        return Ok(out);
    }
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let ck: f64 = dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum();
        *slot = ck / c0;
    }
    Ok(out)
}

/// Effective sample size N / (1 + 2 Σ ρ̂_k), truncating the sum with the
/// initial positive sequence rule on consecutive lag pairs.
pub fn ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(SvError::Domain("ess needs at least two draws".into()));
    }
    let max_lag = (n - 1).min(n / 2 + 1).max(1);
    let rho = acf(series, max_lag)?;
    if rho[1..].iter().all(|r| *r == 0.0) {
        return Ok(n as f64);
    }
    // Γ_k = ρ_{2k} + ρ_{2k+1}, summed while positive
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 <= max_lag {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    let tau = tau.max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// Type-7 sample quantile of unsorted data.
pub fn quantile(data: &[f64], prob: f64) -> Result<f64> {
    let mut v = data.to_vec();
    sort_floats(&mut v)?;
    quantile_sorted(&v, prob)
}

pub(crate) fn sort_floats(v: &mut [f64]) -> Result<()> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(SvError::NonFinite("quantile of data containing NaN".into()));
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(())
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(SvError::Domain("quantile of empty data".into()));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(SvError::Domain(format!("probability {prob} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub ess: f64,
    pub acf: Vec<f64>,
}

/// Lags reported in [`PosteriorSummary::acf`], capped by the draw count.
pub const SUMMARY_ACF_LAGS: usize = 50;

pub fn summarize(draws: &[f64]) -> Result<PosteriorSummary> {
    let n = draws.len();
    if n == 0 {
        return Err(SvError::EmptyChain);
    }
    let m = mean(draws);
    let sd = if n > 1 {
        (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = draws.to_vec();
    sort_floats(&mut sorted)?;
    let (ess_v, acf_v) = if n > 1 {
        (ess(draws)?, acf(draws, SUMMARY_ACF_LAGS.min(n - 1))?)
    } else {
        (1.0, vec![1.0])
    };
    Ok(PosteriorSummary {
        n,
        mean: m,
        sd,
        q05: quantile_sorted(&sorted, 0.05)?,
        q50: quantile_sorted(&sorted, 0.5)?,
        q95: quantile_sorted(&sorted, 0.95)?,
        ess: ess_v,
        acf: acf_v,
    })
}

/// Gaussian kernel density estimate on an evenly spaced grid spanning the
/// data range padded by three bandwidths. Bandwidth by Silverman's rule.
pub fn kde_grid(draws: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    if draws.len() < 2 || points < 2 {
        return Err(SvError::Domain("kde needs at least two draws and two grid points".into()));
    }
    let n = draws.len() as f64;
    let m = mean(draws);
    let sd = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = draws.to_vec();
    sort_floats(&mut sorted)?;
    let iqr = quantile_sorted(&sorted, 0.75)? - quantile_sorted(&sorted, 0.25)?;
    let mut spread = sd.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = if sd > 0.0 { sd } else { 1e-3 * (1.0 + m.abs()) };
    }
    let bw = 0.9 * spread * n.powf(-0.2);
    let lo = sorted[0] - 3.0 * bw;
    let hi = sorted[sorted.len() - 1] + 3.0 * bw;
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let d: f64 = sorted.iter().map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect())
}

/// Streaming P² estimate of a single quantile in O(1) memory.
#[derive(Debug, Clone, PartialEq)]
pub struct P2Quantile {
    p: f64,
    count: usize,
    heights: [f64; 5],
    pos: [f64; 5],
    desired: [f64; 5],
    incr: [f64; 5],
}

impl P2Quantile {
    pub fn new(p: f64) -> Self {
        P2Quantile {
            p,
            count: 0,
            heights: [0.0; 5],
            pos: [1.0, 2.0, 3.0, 4.0, 5.0],
            desired: [1.0, 1.0 + 2.0 * p, 1.0 + 4.0 * p, 3.0 + 2.0 * p, 5.0],
            incr: [0.0, p / 2.0, p, (1.0 + p) / 2.0, 1.0],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: f64) {
        if self.count < 5 {
            self.heights[self.count] = x;
            self.count += 1;
            if self.count == 5 {
                self.heights.sort_by(|a, b| a.total_cmp(b));
            }
            return;
        }
        self.count += 1;
        let q = &mut self.heights;
        let k = if x < q[0] {
            q[0] = x;
            0
        } else if x >= q[4] {
            q[4] = x;
            3
        } else {
            (0..4).find(|&i| x < q[i + 1]).unwrap_or(3)
        };
        for i in k + 1..5 {
            self.pos[i] += 1.0;
        }
        for i in 0..5 {
            self.desired[i] += self.incr[i];
        }
        for i in 1..4 {
            let d = self.desired[i] - self.pos[i];
            if (d >= 1.0 && self.pos[i + 1] - self.pos[i] > 1.0) || (d <= -1.0 && self.pos[i - 1] - self.pos[i] < -1.0) {
                let s = d.signum();
                let (n0, n1, n2) = (self.pos[i - 1], self.pos[i], self.pos[i + 1]);
                let (q0, q1, q2) = (q[i - 1], q[i], q[i + 1]);
                let parabolic = q1
                    + s / (n2 - n0) * ((n1 - n0 + s) * (q2 - q1) / (n2 - n1) + (n2 - n1 - s) * (q1 - q0) / (n1 - n0));
                q[i] = if q0 < parabolic && parabolic < q2 {
                    parabolic
                } else {
                    let j = if s > 0.0 { i + 1 } else { i - 1 };
                    q1 + s * (q[j] - q1) / (self.pos[j] - n1)
                };
                self.pos[i] += s;
            }
        }
    }

    /// Current estimate; exact type-7 quantile while fewer than five values
    /// have been seen. NaN when empty.
    pub fn estimate(&self) -> f64 {
        match self.count {
            0 => f64::NAN,
            c if c < 5 => {
                let mut v = self.heights[..c].to_vec();
                v.sort_by(|a, b| a.total_cmp(b));
                quantile_sorted(&v, self.p).unwrap_or(f64::NAN)
            }
            _ => self.heights[2],
        }
    }
}
