//! Series ingestion, descriptive statistics and file formats.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the in-memory values bitwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{acf, kde_grid, summarize};
use crate::error::{Result, SvError};
use crate::experiment::McResult;
use crate::sampler::ChainOutput;
use crate::var::VarBacktest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Prices,
    Returns,
}

impl std::str::FromStr for SeriesKind {
    type Err = SvError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prices" | "price" => Ok(SeriesKind::Prices),
            "returns" | "return" => Ok(SeriesKind::Returns),
            other => Err(SvError::Config(format!("unknown series kind '{other}'"))),
        }
    }
}

/// A return series with optional row labels (e.g. dates).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub values: Vec<f64>,
    pub labels: Option<Vec<String>>,
}

impl ReturnSeries {
    pub fn demeaned(mut self) -> Self {
        let m = self.values.iter().sum::<f64>() / self.values.len() as f64;
        for v in &mut self.values {
            *v -= m;
        }
        self
    }
}

/// Percent log returns 100·(ln P_t − ln P_{t−1}).
pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect()
}

/// Parses CSV text with one column (value) or two (label, value). A first
/// row whose value is not numeric is taken as a header.
pub fn parse_series(text: &str, kind: SeriesKind) -> Result<ReturnSeries> {
    parse_series_column(text, kind, None)
}

/// Like [`parse_series`], but `column` (1-based) selects the value column of
/// a wider file; labels then come from the first column.
pub fn parse_series_column(text: &str, kind: SeriesKind, column: Option<usize>) -> Result<ReturnSeries> {
    if column == Some(0) {
        return Err(SvError::Config("column index is 1-based".into()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut row_width = None;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| SvError::Parse { row, msg: e.to_string() })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let width = rec.len();
        let value_col = match column {
            Some(c) if c <= width => c - 1,
            Some(c) => return Err(SvError::Parse { row, msg: format!("no column {c} in a row of {width}") }),
            None if width == 0 || width > 2 => {
                return Err(SvError::Parse { row, msg: format!("expected 1 or 2 columns, found {width}") });
            }
            None => width - 1,
        };
        let has_label = value_col > 0;
        let cell = &rec[value_col];
        let parsed = cell.parse::<f64>();
        if i == 0 && parsed.is_err() {
            continue;
        }
        match row_width {
            None => row_width = Some(width),
            Some(w) if w != width => {
                return Err(SvError::Parse { row, msg: "inconsistent column count".into() });
            }
            _ => {}
        }
        let v = parsed.map_err(|_| SvError::Parse { row, msg: format!("non-numeric value '{cell}'") })?;
        if !v.is_finite() {
            return Err(SvError::Parse { row, msg: format!("non-finite value '{cell}'") });
        }
        if kind == SeriesKind::Prices && v <= 0.0 {
            return Err(SvError::Parse { row, msg: format!("price must be positive, got {v}") });
        }
        values.push(v);
        if has_label {
            labels.push(rec[0].to_string());
        }
    }
    if values.len() < 2 {
        return Err(SvError::Parse { row: values.len(), msg: "need at least two data rows".into() });
    }
    let labels = (!labels.is_empty()).then_some(labels);
    Ok(match kind {
        SeriesKind::Returns => ReturnSeries { values, labels },
        SeriesKind::Prices => ReturnSeries {
            values: log_returns(&values),
            labels: labels.map(|l| l[1..].to_vec()),
        },
    })
}

/// Reads a series from disk; see [`parse_series`].
pub fn load_series(path: &Path, kind: SeriesKind) -> Result<ReturnSeries> {
    load_series_column(path, kind, None)
}

pub fn load_series_column(path: &Path, kind: SeriesKind, column: Option<usize>) -> Result<ReturnSeries> {
    parse_series_column(&fs::read_to_string(path)?, kind, column)
}

/// Moment statistics; kurtosis is raw (3 for a normal law). Skewness and
/// kurtosis are NaN for a constant series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

pub fn describe(y: &[f64]) -> Result<DescriptiveStats> {
    let n = y.len();
    if n < 2 {
        return Err(SvError::Domain("describe needs at least two observations".into()));
    }
    let nf = n as f64;
    let mean = y.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in y {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let sd = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (f64::NAN, f64::NAN) };
    Ok(DescriptiveStats { n, mean, sd, skewness, kurtosis })
}

pub const CHAIN_HEADER: &str = "iter,beta,phi,sigma,nu,accept_vol,accept_par";

/// One row of the chain CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRow {
    pub iter: usize,
    pub theta: [f64; 4],
    pub accept_vol: bool,
    pub accept_par: bool,
}

impl ChainRow {
    /// Bitwise comparison, treating equal NaN payloads as equal.
    pub fn bits_eq(&self, other: &ChainRow) -> bool {
        self.iter == other.iter
            && self.accept_vol == other.accept_vol
            && self.accept_par == other.accept_par
            && self.theta.iter().zip(&other.theta).all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

pub fn chain_rows(chain: &ChainOutput) -> Vec<ChainRow> {
    (0..chain.len())
        .map(|k| ChainRow {
            iter: chain.iters[k],
            theta: chain.theta_draws[k].as_array(),
            accept_vol: chain.accept_vol_flags[k],
            accept_par: chain.accept_par_flags[k],
        })
        .collect()
}

pub fn chain_csv(chain: &ChainOutput) -> String {
    let mut s = String::from(CHAIN_HEADER);
    s.push('\n');
    for r in chain_rows(chain) {
        let [b, p, sg, nu] = r.theta;
        let _ = writeln!(s, "{},{b},{p},{sg},{nu},{},{}", r.iter, u8::from(r.accept_vol), u8::from(r.accept_par));
    }
    s
}

pub fn write_chain_csv(path: &Path, chain: &ChainOutput) -> Result<()> {
    Ok(fs::write(path, chain_csv(chain))?)
}

pub fn parse_chain_csv(text: &str) -> Result<Vec<ChainRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CHAIN_HEADER {
        return Err(SvError::Parse { row: 1, msg: format!("unexpected chain header '{}'", header.join(",")) });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| SvError::Parse { row, msg: e.to_string() })?;
        let num = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|_| SvError::Parse { row, msg: format!("bad number '{}'", &rec[j]) })
        };
        let flag = |j: usize| -> Result<bool> {
            match &rec[j] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(SvError::Parse { row, msg: format!("bad flag '{other}'") }),
            }
        };
        rows.push(ChainRow {
            iter: rec[0].parse().map_err(|_| SvError::Parse { row, msg: format!("bad iteration '{}'", &rec[0]) })?,
            theta: [num(1)?, num(2)?, num(3)?, num(4)?],
            accept_vol: flag(5)?,
            accept_par: flag(6)?,
        });
    }
    Ok(rows)
}

pub fn read_chain_csv(path: &Path) -> Result<Vec<ChainRow>> {
    parse_chain_csv(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummaryJson {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceJson {
    pub vol: f64,
    pub par: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub params: BTreeMap<String, ParamSummaryJson>,
    pub acceptance: AcceptanceJson,
    pub config: serde_json::Value,
    pub seed: u64,
}

pub const PARAM_NAMES: [&str; 4] = ["beta", "phi", "sigma", "nu"];

fn active_params(chain: &ChainOutput) -> usize {
    chain.kind.n_params()
}

pub fn summary_json<C: Serialize>(chain: &ChainOutput, config: &C, seed: u64) -> Result<SummaryJson> {
    let mut params = BTreeMap::new();
    for (j, name) in PARAM_NAMES.iter().enumerate().take(active_params(chain)) {
        let s = summarize(&chain.column(j))?;
        params.insert(
            name.to_string(),
            ParamSummaryJson { mean: s.mean, sd: s.sd, q05: s.q05, q50: s.q50, q95: s.q95, ess: s.ess },
        );
    }
    Ok(SummaryJson {
        params,
        acceptance: AcceptanceJson { vol: chain.accept_rate_vol, par: chain.accept_rate_par },
        config: serde_json::to_value(config)?,
        seed,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(fs::write(path, s)?)
}

pub const VAR_HEADER: &str = "index,return,var,exceeded";

pub fn var_csv(bt: &VarBacktest) -> String {
    let mut s = String::from(VAR_HEADER);
    s.push('\n');
    for w in &bt.windows {
        let _ = writeln!(s, "{},{},{},{}", w.index, w.ret, w.var, u8::from(w.exceeded));
    }
    s
}

pub fn write_var_csv(path: &Path, bt: &VarBacktest) -> Result<()> {
    Ok(fs::write(path, var_csv(bt))?)
}

/// Parsed VaR CSV rows: (index, return, var, exceeded).
pub fn parse_var_csv(text: &str) -> Result<Vec<(usize, f64, f64, bool)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| SvError::Parse { row, msg: e.to_string() })?;
        let bad = |what: &str| SvError::Parse { row, msg: format!("bad {what}") };
        out.push((
            rec[0].parse().map_err(|_| bad("index"))?,
            rec[1].parse().map_err(|_| bad("return"))?,
            rec[2].parse().map_err(|_| bad("var"))?,
            &rec[3] == "1",
        ));
    }
    Ok(out)
}

pub const MC_HEADER: &str = "family,scheme,param,truth,mean_estimate,bias,smse,reps_ok,failures";

pub fn mc_table_csv(result: &McResult, family: &str, scheme: &str) -> String {
    let mut s = String::from(MC_HEADER);
    s.push('\n');
    let ok = result.replications.len() - result.failures;
    for p in &result.params {
        let _ = writeln!(
            s,
            "{family},{scheme},{},{},{},{},{},{ok},{}",
            p.name, p.truth, p.mean_estimate, p.bias, p.smse, result.failures
        );
    }
    s
}

pub fn mc_replications_csv(result: &McResult) -> String {
    let mut s = String::from("rep,beta,phi,sigma,nu,accept_vol,accept_par,failure\n");
    for r in &result.replications {
        let t = r.estimate.map(|p| p.as_array()).unwrap_or([f64::NAN; 4]);
        let failure = r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{failure}",
            r.index, t[0], t[1], t[2], t[3], r.accept_rate_vol, r.accept_rate_par
        );
    }
    s
}

pub fn simulation_csv(y: &[f64], h: &[f64]) -> String {
    let mut s = String::from("t,y,h\n");
    for (t, (a, b)) in y.iter().zip(h).enumerate() {
        let _ = writeln!(s, "{},{a},{b}", t + 1);
    }
    s
}

/// Largest ACF lag written to the plot file.
pub const PLOT_ACF_LAGS: usize = 100;
/// Upper bound on trace rows written to the plot file.
pub const PLOT_TRACE_ROWS: usize = 2000;
pub const PLOT_KDE_POINTS: usize = 256;

/// Plot-ready CSV files for a fitted chain, keyed by file name.
pub fn plot_files(chain: &ChainOutput, y: &[f64]) -> Result<Vec<(String, String)>> {
    let d = active_params(chain);
    let cols: Vec<Vec<f64>> = (0..d).map(|j| chain.column(j)).collect();
    let names = &PARAM_NAMES[..d];
    let mut files = Vec::new();

    let max_lag = PLOT_ACF_LAGS.min(chain.len().saturating_sub(1));
    let acfs = cols.iter().map(|c| acf(c, max_lag)).collect::<Result<Vec<_>>>()?;
    let mut s = format!("lag,{}\n", names.join(","));
    for k in 0..=max_lag {
        let row: Vec<String> = acfs.iter().map(|a| a[k].to_string()).collect();
        let _ = writeln!(s, "{k},{}", row.join(","));
    }
    files.push(("acf.csv".to_string(), s));

    let step = chain.len().div_ceil(PLOT_TRACE_ROWS).max(1);
    let mut s = format!("iter,{}\n", names.join(","));
    for k in (0..chain.len()).step_by(step) {
        let row: Vec<String> = cols.iter().map(|c| c[k].to_string()).collect();
        let _ = writeln!(s, "{},{}", chain.iters[k], row.join(","));
    }
    files.push(("trace.csv".to_string(), s));

    let mut s = String::from("param,x,density\n");
    for (name, c) in names.iter().zip(&cols) {
        if chain.len() >= 2 {
            for (x, f) in kde_grid(c, PLOT_KDE_POINTS)? {
                let _ = writeln!(s, "{name},{x},{f}");
            }
        }
    }
    files.push(("kde.csv".to_string(), s));

    let mean = chain.h_summary.mean();
    let median = chain.h_summary.median();
    let beta_hat = cols[0].iter().sum::<f64>() / cols[0].len() as f64;
    let mut s = String::from("t,y,h_mean,h_median,vol_median,vol_scaled\n");
    for t in 0..y.len() {
        let v = (0.5 * median[t]).exp();
        let _ = writeln!(s, "{},{},{},{},{v},{}", t + 1, y[t], mean[t], median[t], beta_hat * v);
    }
    files.push(("volatility.csv".to_string(), s));

    if let Some(hd) = &chain.h_draws {
        let mut s = String::from("iter");
        for t in 1..=y.len() {
            let _ = write!(s, ",h{t}");
        }
        s.push('\n');
        for (k, h) in hd.iter().enumerate() {
            let _ = write!(s, "{}", chain.iters[k]);
            for v in h {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        files.push(("h_draws.csv".to_string(), s));
    }
    Ok(files)
}
