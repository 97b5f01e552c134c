//! Command-line interface.
//!
//! Every option can also come from a flat `key=value` file passed with
//! `--config FILE`; keys are the long flag names (the input file is `input`)
//! and flags given on the command line win. Exit codes: 0 success, 1 usage,
//! 2 data, 3 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;

use crate::dist::{ErrorFamily, FamilyKind};
use crate::error::SvError;
use crate::experiment::{run_mc, InitPolicy, McExperiment};
use crate::io::{
    chain_csv, describe, load_series_column, mc_replications_csv, mc_table_csv, plot_files, simulation_csv,
    summary_json, var_csv, SeriesKind,
};
use crate::model::{simulate, ModelParams};
use crate::sampler::{default_init, run_chain, McmcConfig, Scheme};
use crate::var::{rolling_backtest, BacktestConfig};
use crate::SvRng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "svlangevin", version, about = "Stochastic volatility estimation with Langevin samplers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate returns and log-volatilities from the model.
    Simulate(SimulateArgs),
    /// Fit the model to a return or price series.
    Fit(FitArgs),
    /// Monte Carlo bias and smse of posterior means.
    Mc(McArgs),
    /// Rolling one-step-ahead VaR backtest.
    VarBacktest(VarArgs),
    /// Descriptive statistics of a series (kurtosis is raw, normal = 3).
    Describe(DescribeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0.65)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.98)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.15)]
    pub sigma: f64,
    #[arg(long, default_value = "gaussian")]
    pub errors: FamilyKind,
    /// Tail parameter; defaults to 1.6 for GED and 7 for Student-t.
    #[arg(long)]
    pub nu: Option<f64>,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams, CliError> {
        let nu = self.nu.unwrap_or(match self.errors {
            FamilyKind::Gaussian => f64::NAN,
            FamilyKind::Ged => 1.6,
            FamilyKind::StudentT => 7.0,
        });
        ModelParams::new(self.beta, self.phi, self.sigma, ErrorFamily::new(self.errors, nu)).map_err(CliError::usage)
    }
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 10_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps_vol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps_par: f64,
    /// Keep the step sizes fixed during burn-in.
    #[arg(long)]
    pub no_adapt: bool,
    #[arg(long, default_value_t = 0.574)]
    pub target_accept: f64,
    #[arg(long, default_value = "hybrid")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl ChainArgs {
    fn config(&self, store_h: bool) -> Result<McmcConfig, CliError> {
        let cfg = McmcConfig {
            n_iter: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            eps_vol: self.eps_vol,
            eps_par: self.eps_par,
            seed: self.seed,
            adapt: !self.no_adapt,
            target_accept_vol: self.target_accept,
            target_accept_par: self.target_accept,
            scheme: self.scheme,
            store_h,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV with (value) or (date,value) rows.
    pub input: PathBuf,
    #[arg(long, default_value = "returns")]
    pub kind: SeriesKind,
    /// 1-based value column for files with more than two columns.
    #[arg(long)]
    pub column: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "simulated.csv")]
    pub out: PathBuf,
    /// Flat key=value file of option defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "gaussian")]
    pub errors: FamilyKind,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Fit the raw returns instead of the demeaned series.
    #[arg(long)]
    pub no_demean: bool,
    /// Also write every kept h path.
    #[arg(long)]
    pub store_h: bool,
    #[arg(long, default_value = "fit-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Comma-separated schemes to compare on the same simulated data sets.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<Scheme>,
    /// Chain start: truth or default.
    #[arg(long, default_value = "truth")]
    pub init: String,
    #[arg(long, default_value = "mc-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "gaussian")]
    pub errors: FamilyKind,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 252)]
    pub windows: usize,
    #[arg(long, default_value_t = 0.99)]
    pub level: f64,
    /// Error draws per posterior draw.
    #[arg(long, default_value_t = 1000)]
    pub inner: usize,
    #[arg(long, default_value_t = 3000)]
    pub warm_iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub warm_burnin: usize,
    /// Refit every window from the default start.
    #[arg(long)]
    pub cold: bool,
    #[arg(long)]
    pub no_demean: bool,
    #[arg(long, default_value = "var_backtest.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Error with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn with_code(code: i32, e: impl std::fmt::Display) -> Self {
        CliError { code, message: e.to_string() }
    }
    fn usage(e: impl std::fmt::Display) -> Self {
        Self::with_code(EXIT_USAGE, e)
    }
    fn data(e: impl std::fmt::Display) -> Self {
        Self::with_code(EXIT_DATA, e)
    }
}

impl From<SvError> for CliError {
    fn from(e: SvError) -> Self {
        let code = match e {
            SvError::Config(_) => EXIT_USAGE,
            SvError::Parse { .. } | SvError::Io(_) | SvError::Csv(_) | SvError::Json(_) | SvError::Dimension { .. } => {
                EXIT_DATA
            }
            SvError::Domain(_) | SvError::NonFinite(_) | SvError::NotPositiveDefinite { .. } | SvError::EmptyChain => {
                EXIT_NUMERICAL
            }
        };
        CliError::with_code(code, e)
    }
}

/// Parses a flat `key=value` file. Blank lines and lines starting with `#`
/// are ignored.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

struct ArgSpec {
    takes_value: bool,
    positional: bool,
}

/// Splices config-file options into the argument list ahead of the user's
/// own flags, skipping keys the user already set.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(sub_pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let mut config_path = None;
    let mut rest = Vec::new();
    let mut it = args[sub_pos + 1..].iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config_path = Some(it.next().ok_or_else(|| CliError::usage("--config needs a file"))?.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else {
            rest.push(a.clone());
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&args[sub_pos])
        .ok_or_else(|| CliError::usage(format!("unknown command '{}'", args[sub_pos])))?;
    let mut specs = BTreeMap::new();
    for a in sub.get_arguments() {
        let takes_value = !matches!(a.get_action(), ArgAction::SetTrue | ArgAction::SetFalse | ArgAction::Help | ArgAction::Version);
        match a.get_long() {
            Some(l) => specs.insert(l.to_string(), ArgSpec { takes_value, positional: false }),
            None => specs.insert(a.get_id().to_string(), ArgSpec { takes_value: true, positional: true }),
        };
    }

    let mut given = Vec::new();
    let mut has_positional = false;
    let mut j = 0;
    while j < rest.len() {
        let a = &rest[j];
        if let Some(name) = a.strip_prefix("--") {
            let (name, inline) = match name.split_once('=') {
                Some((n, _)) => (n, true),
                None => (name, false),
            };
            if !inline && specs.get(name).is_some_and(|s| s.takes_value) {
                j += 1;
            }
            given.push(name.to_string());
        } else {
            has_positional = true;
        }
        j += 1;
    }

    let text = fs::read_to_string(&path).map_err(|e| CliError::usage(format!("cannot read config {path}: {e}")))?;
    let mut injected = Vec::new();
    let mut positional = None;
    for (key, value) in parse_config_file(&text)? {
        let spec = specs
            .get(&key)
            .filter(|_| key != "config" && key != "help")
            .ok_or_else(|| CliError::usage(format!("unknown config key '{key}'")))?;
        if spec.positional {
            if !has_positional {
                positional = Some(value);
            }
            continue;
        }
        if given.contains(&key) {
            continue;
        }
        if spec.takes_value {
            injected.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => return Err(CliError::usage(format!("config key '{key}' expects true/false, got '{other}'"))),
            }
        }
    }
    let mut out: Vec<String> = args[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend(rest);
    if let Some(p) = positional {
        out.push(p);
    }
    Ok(out)
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code. Diagnostics go to stderr as one line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let outcome = expand_config(args).and_then(|args| match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                print!("{e}");
                Ok(())
            }
            _ => {
                let msg = e.to_string();
                let line = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ").to_string();
                Err(CliError::usage(line))
            }
        },
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message.lines().next().unwrap_or(""));
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Mc(a) => cmd_mc(&a),
        Command::VarBacktest(a) => cmd_var(&a),
        Command::Describe(a) => cmd_describe(&a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn load(input: &InputArgs, demean: bool) -> Result<Vec<f64>, CliError> {
    let s = load_series_column(&input.input, input.kind, input.column)
        .map_err(|e| CliError::data(format!("{}: {e}", input.input.display())))?;
    Ok(if demean { s.demeaned().values } else { s.values })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let params = a.model.params()?;
    if a.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let mut rng = SvRng::seed_from_u64(a.seed);
    let sim = simulate(&params, a.n, &mut rng)?;
    write_file(&a.out, &simulation_csv(&sim.y, &sim.h))?;
    println!("wrote {} observations to {}", a.n, a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct FitEcho<'a> {
    input: String,
    kind: SeriesKind,
    errors: FamilyKind,
    demean: bool,
    mcmc: &'a McmcConfig,
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let cfg = a.chain.config(a.store_h)?;
    let y = load(&a.input, !a.no_demean)?;
    let init = default_init(&y, a.errors);
    let mut rng = SvRng::seed_from_u64(cfg.seed);
    let chain = run_chain(&y, &init, &cfg, &mut rng)?;
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("chain.csv"), &chain_csv(&chain))?;
    let echo = FitEcho {
        input: a.input.input.display().to_string(),
        kind: a.input.kind,
        errors: a.errors,
        demean: !a.no_demean,
        mcmc: &cfg,
    };
    let summary = summary_json(&chain, &echo, cfg.seed)?;
    let json = serde_json::to_string_pretty(&summary).map_err(SvError::from)? + "\n";
    write_file(&a.out_dir.join("summary.json"), &json)?;
    for (name, contents) in plot_files(&chain, &y)? {
        write_file(&a.out_dir.join(name), &contents)?;
    }
    for (name, s) in &summary.params {
        println!("{name:>6}  mean {:.4}  sd {:.4}  ess {:.0}", s.mean, s.sd, s.ess);
    }
    println!("acceptance  vol {:.3}  par {:.3}", chain.accept_rate_vol, chain.accept_rate_par);
    Ok(())
}

fn cmd_mc(a: &McArgs) -> Result<(), CliError> {
    let params = a.model.params()?;
    let init = match a.init.as_str() {
        "truth" => InitPolicy::Truth,
        "default" => InitPolicy::Default,
        other => return Err(CliError::usage(format!("unknown init '{other}'"))),
    };
    let schemes = if a.schemes.is_empty() { vec![a.chain.scheme] } else { a.schemes.clone() };
    create_dir(&a.out_dir)?;
    let mut table = String::new();
    let mut reps = String::new();
    for (k, scheme) in schemes.iter().enumerate() {
        let cfg = McmcConfig { scheme: *scheme, ..a.chain.config(false)? };
        let exp = McExperiment { true_params: params, n_obs: a.n, m_reps: a.reps, cfg, init };
        let result = run_mc(&exp, a.chain.seed)?;
        let t = mc_table_csv(&result, params.kind().name(), &scheme.to_string());
        table.push_str(if k == 0 { &t } else { t.split_once('\n').map_or("", |x| x.1) });
        let r = mc_replications_csv(&result);
        let r = r.split_once('\n').map_or("", |x| x.1);
        if k == 0 {
            reps.push_str("scheme,rep,beta,phi,sigma,nu,accept_vol,accept_par,failure\n");
        }
        for line in r.lines() {
            reps.push_str(&format!("{scheme},{line}\n"));
        }
        for p in &result.params {
            println!("{scheme:>8} {:>6}  bias {:+.4}  smse {:.4}", p.name, p.bias, p.smse);
        }
        if result.failures > 0 {
            println!("{scheme:>8} failed replications: {}", result.failures);
        }
    }
    write_file(&a.out_dir.join("mc_table.csv"), &table)?;
    write_file(&a.out_dir.join("mc_replications.csv"), &reps)?;
    Ok(())
}

fn cmd_var(a: &VarArgs) -> Result<(), CliError> {
    let initial = a.chain.config(false)?;
    let warm = McmcConfig { n_iter: a.warm_iters, burn_in: a.warm_burnin, ..initial.clone() };
    warm.validate().map_err(CliError::usage)?;
    if !(a.level > 0.5 && a.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0.5, 1), got {}", a.level)));
    }
    if a.inner == 0 || a.windows == 0 {
        return Err(CliError::usage("--inner and --windows must be positive"));
    }
    let y = load(&a.input, !a.no_demean)?;
    if y.len() < a.windows + 2 {
        return Err(CliError::data(format!("series of {} returns is too short for {} windows", y.len(), a.windows)));
    }
    let cfg = BacktestConfig {
        windows: a.windows,
        level: a.level,
        inner: a.inner,
        initial,
        warm,
        warm_start: !a.cold,
        seed: a.chain.seed,
    };
    let bt = rolling_backtest(&y, a.errors, &cfg)?;
    write_file(&a.out, &var_csv(&bt))?;
    println!(
        "exceedances {} of {} windows (expected {:.2}), failed windows {}",
        bt.exceedance_count,
        bt.windows.len(),
        bt.expected_exceedances(),
        bt.failed_windows
    );
    Ok(())
}

fn cmd_describe(a: &DescribeArgs) -> Result<(), CliError> {
    let y = load(&a.input, false)?;
    let d = describe(&y).map_err(CliError::data)?;
    let json = serde_json::to_string_pretty(&d).map_err(SvError::from)?;
    println!("{json}");
    Ok(())
}
