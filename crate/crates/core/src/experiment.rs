//! Monte Carlo replication driver for bias and smse of posterior means.
//!
//! Replication i uses the ChaCha8 stream `i + 1` of the master seed, for both
//! the simulated data and the chain, so serial and parallel runs agree.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};
use crate::model::{simulate, ModelParams, Simulation};
use crate::sampler::{default_init, run_chain, ChainInit, McmcConfig};
use crate::SvRng;

/// How each replication's chain is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    /// True θ and the simulated h.
    Truth,
    /// Prior medians and the data-based h.
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McExperiment {
    pub true_params: ModelParams,
    pub n_obs: usize,
    pub m_reps: usize,
    pub cfg: McmcConfig,
    pub init: InitPolicy,
}

impl McExperiment {
    pub fn validate(&self) -> Result<()> {
        self.true_params.validate()?;
        self.cfg.validate()?;
        if self.m_reps == 0 {
            return Err(SvError::Config("m_reps must be >= 1".into()));
        }
        if self.n_obs < 2 {
            return Err(SvError::Config("n_obs must be >= 2".into()));
        }
        Ok(())
    }
}

/// Random stream of replication `rep`.
pub fn replication_rng(master_seed: u64, rep: usize) -> SvRng {
    let mut rng = SvRng::seed_from_u64(master_seed);
    rng.set_stream(rep as u64 + 1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub smse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub estimate: Option<ModelParams>,
    pub accept_rate_vol: f64,
    pub accept_rate_par: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub params: Vec<ParamError>,
    pub replications: Vec<Replication>,
    pub failures: usize,
}

impl McResult {
    pub fn get(&self, name: &str) -> Option<&ParamError> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Successful point estimates in replication order.
    pub fn estimates(&self) -> Vec<ModelParams> {
        self.replications.iter().filter_map(|r| r.estimate).collect()
    }
}

/// Outcome of fitting one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub estimate: ModelParams,
    pub accept_rate_vol: f64,
    pub accept_rate_par: f64,
}

/// Posterior-mean estimator: runs the configured chain on the simulated data.
pub fn fit_posterior_mean(exp: &McExperiment, sim: &Simulation, rng: &mut SvRng) -> Result<Fit> {
    let init = match exp.init {
        InitPolicy::Truth => ChainInit { h: sim.h.clone(), params: exp.true_params },
        InitPolicy::Default => default_init(&sim.y, exp.true_params.kind()),
    };
    let chain = run_chain(&sim.y, &init, &exp.cfg, rng)?;
    if chain.accept_rate_vol == 0.0 || chain.accept_rate_par == 0.0 {
        return Err(SvError::NonFinite(format!(
            "stuck chain (acceptance vol {}, par {})",
            chain.accept_rate_vol, chain.accept_rate_par
        )));
    }
    let estimate = chain.posterior_mean()?;
    if estimate.as_array()[..3].iter().any(|v| !v.is_finite()) {
        return Err(SvError::NonFinite("posterior mean".into()));
    }
    Ok(Fit { estimate, accept_rate_vol: chain.accept_rate_vol, accept_rate_par: chain.accept_rate_par })
}

/// Runs the experiment with the posterior-mean estimator.
pub fn run_mc(exp: &McExperiment, master_seed: u64) -> Result<McResult> {
    run_mc_with(exp, master_seed, |sim, rng| fit_posterior_mean(exp, sim, rng))
}

/// Runs the experiment with a caller-supplied estimator. Failed replications
/// are excluded from the aggregates and counted.
pub fn run_mc_with<F>(exp: &McExperiment, master_seed: u64, estimator: F) -> Result<McResult>
where
    F: Fn(&Simulation, &mut SvRng) -> Result<Fit> + Sync,
{
    exp.validate()?;
    let replications: Vec<Replication> = (0..exp.m_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(master_seed, i);
            let outcome = simulate(&exp.true_params, exp.n_obs, &mut rng).and_then(|sim| estimator(&sim, &mut rng));
            match outcome {
                Ok(fit) => Replication {
                    index: i,
                    estimate: Some(fit.estimate),
                    accept_rate_vol: fit.accept_rate_vol,
                    accept_rate_par: fit.accept_rate_par,
                    failure: None,
                },
                Err(e) => Replication {
                    index: i,
                    estimate: None,
                    accept_rate_vol: f64::NAN,
                    accept_rate_par: f64::NAN,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    let failures = replications.iter().filter(|r| r.estimate.is_none()).count();
    let estimates: Vec<[f64; 4]> = replications.iter().filter_map(|r| r.estimate.map(|p| p.as_array())).collect();
    let truth = exp.true_params.as_array();
    let names = ["beta", "phi", "sigma", "nu"];
    let n_params = exp.true_params.kind().n_params();
    let params = (0..n_params)
        .map(|j| aggregate(names[j], truth[j], estimates.iter().map(|e| e[j])))
        .collect();
    Ok(McResult { params, replications, failures })
}

/// bias = mean(θ̂) − θ and smse = sqrt(mean((θ̂ − θ)²)); NaN with no estimates.
pub fn aggregate(name: &str, truth: f64, estimates: impl Iterator<Item = f64>) -> ParamError {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for e in estimates {
        n += 1;
        sum += e - truth;
        sq += (e - truth) * (e - truth);
    }
    let bias = sum / n as f64;
    ParamError {
        name: name.to_string(),
        truth,
        mean_estimate: truth + bias,
        bias,
        smse: (sq / n as f64).sqrt(),
    }
}
