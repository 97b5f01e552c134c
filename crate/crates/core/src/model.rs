//! The stochastic volatility model
//!
//! ```text
//! y_t = β exp(h_t / 2) ε_t,      h_t = φ h_{t-1} + η_t,   η_t ~ N(0, σ²)
//! ```
//!
//! with h₁ drawn from the stationary law N(0, σ²/(1−φ²)). Parameters are
//! sampled on the unconstrained scale ξ = (δ, γ, α, p) with β = e^δ,
//! σ = e^γ, φ = tanh α and ν = e^p (GED) or ν = e^p + 4 (Student-t).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_errors, ErrorFamily, FamilyKind, LN_SQRT_2PI};
use crate::error::{check_len, Result, SvError};

/// Rate of the truncated exponential prior on the Student-t degrees of freedom.
pub const STUDENT_NU_PRIOR_RATE: f64 = 1.0 / 3.0;
/// Lower bound of the Student-t degrees of freedom.
pub const STUDENT_NU_FLOOR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub phi: f64,
    pub sigma: f64,
    pub family: ErrorFamily,
}

impl ModelParams {
    pub fn new(beta: f64, phi: f64, sigma: f64, family: ErrorFamily) -> Result<Self> {
        let p = ModelParams { beta, phi, sigma, family };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SvError::Domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(SvError::Domain(format!("|phi| must be < 1, got {}", self.phi)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SvError::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        self.family.validate()
    }

    pub fn kind(&self) -> FamilyKind {
        self.family.kind()
    }

    /// (β, φ, σ, ν) with ν = NaN for Gaussian errors.
    pub fn as_array(&self) -> [f64; 4] {
        [self.beta, self.phi, self.sigma, self.family.nu().unwrap_or(f64::NAN)]
    }

    /// Stationary variance σ²/(1−φ²) of the log-volatility.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedParams {
    pub delta: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// Unused for Gaussian errors.
    pub p: f64,
}

impl TransformedParams {
    /// Packs the active coordinates: (δ, γ, α) or (δ, γ, α, p).
    pub fn to_vec(&self, kind: FamilyKind) -> Vec<f64> {
        let mut v = vec![self.delta, self.gamma, self.alpha];
        if kind != FamilyKind::Gaussian {
            v.push(self.p);
        }
        v
    }

    pub fn from_slice(xi: &[f64], kind: FamilyKind) -> Result<Self> {
        check_len(kind.n_params(), xi.len())?;
        Ok(TransformedParams {
            delta: xi[0],
            gamma: xi[1],
            alpha: xi[2],
            p: if kind == FamilyKind::Gaussian { 0.0 } else { xi[3] },
        })
    }
}

pub fn to_unconstrained(params: &ModelParams) -> TransformedParams {
    let p = match params.family {
        ErrorFamily::Gaussian => 0.0,
        ErrorFamily::Ged { nu } => nu.ln(),
        ErrorFamily::StudentT { nu } => (nu - STUDENT_NU_FLOOR).ln(),
    };
    TransformedParams {
        delta: params.beta.ln(),
        gamma: params.sigma.ln(),
        alpha: params.phi.atanh(),
        p,
    }
}

pub fn from_unconstrained(xi: &TransformedParams, kind: FamilyKind) -> ModelParams {
    ModelParams {
        beta: xi.delta.exp(),
        phi: xi.alpha.tanh(),
        sigma: xi.gamma.exp(),
        family: ErrorFamily::new(kind, nu_from_p(xi.p, kind)),
    }
}

pub(crate) fn nu_from_p(p: f64, kind: FamilyKind) -> f64 {
    match kind {
        FamilyKind::Gaussian => f64::NAN,
        FamilyKind::Ged => p.exp(),
        FamilyKind::StudentT => p.exp() + STUDENT_NU_FLOOR,
    }
}

/// ln of 1 − tanh²(α), stable for large |α|.
pub(crate) fn ln_one_minus_tanh2(alpha: f64) -> f64 {
    let a = alpha.abs();
    // 1 − tanh² = 4 e^{−2a} / (1 + e^{−2a})²
    2.0 * std::f64::consts::LN_2 - 2.0 * a - 2.0 * (-2.0 * a).exp().ln_1p()
}

/// ln |∂θ/∂ξ| = ln β + ln σ + ln(1−φ²) + ln(dν/dp).
///
/// dν/dp is ν for GED and ν − 4 for Student-t, so in both cases its log is p.
pub fn log_jacobian(xi: &TransformedParams, kind: FamilyKind) -> f64 {
    let nu_term = match kind {
        FamilyKind::Gaussian => 0.0,
        FamilyKind::Ged | FamilyKind::StudentT => xi.p,
    };
    xi.delta + xi.gamma + ln_one_minus_tanh2(xi.alpha) + nu_term
}

/// ln f(y, h | θ): stationary AR(1) for h plus the observation densities.
pub fn log_joint(y: &[f64], h: &[f64], params: &ModelParams) -> Result<f64> {
    check_len(y.len(), h.len())?;
    if y.is_empty() {
        return Err(SvError::Domain("empty series".into()));
    }
    params.validate()?;
    let ln_beta = params.beta.ln();
    let mut obs = 0.0;
    for (&yt, &ht) in y.iter().zip(h) {
        let eps = yt * (-0.5 * ht).exp() / params.beta;
        obs += params.family.logpdf(eps)? - ln_beta - 0.5 * ht;
    }
    Ok(obs + log_ar1(h, params.phi, params.sigma))
}

/// Log density of the stationary Gaussian AR(1) path.
pub(crate) fn log_ar1(h: &[f64], phi: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let one_m_phi2 = 1.0 - phi * phi;
    let n = h.len() as f64;
    let mut q = 0.0;
    for w in h.windows(2) {
        let d = w[1] - phi * w[0];
        q += d * d;
    }
    -n * LN_SQRT_2PI - n * sigma.ln() + 0.5 * one_m_phi2.ln()
        - 0.5 * one_m_phi2 * h[0] * h[0] / s2
        - 0.5 * q / s2
}

/// Log prior density, −∞ off the support.
///
/// Priors: β ~ Exp(1), σ² ~ Inv-χ²(10, 0.05), (φ+1)/2 ~ Beta(20, 1.5), and
/// for ν either the kernel −4/ν − 3 ln ν (GED) or the exponential with rate
/// 1/3 truncated at ν > 4 (Student-t).
pub fn log_prior(params: &ModelParams) -> f64 {
    let ModelParams { beta, phi, sigma, family } = *params;
    if !(beta > 0.0 && phi.abs() < 1.0 && sigma > 0.0) || !beta.is_finite() || !sigma.is_finite() {
        return f64::NEG_INFINITY;
    }
    let base = -beta - 0.25 / (sigma * sigma) - 11.0 * sigma.ln() + 19.0 * (0.5 * (1.0 + phi)).ln()
        + 0.5 * (0.5 * (1.0 - phi)).ln();
    base + log_prior_nu(&family)
}

pub(crate) fn log_prior_nu(family: &ErrorFamily) -> f64 {
    match *family {
        ErrorFamily::Gaussian => 0.0,
        ErrorFamily::Ged { nu } if nu > 0.0 && nu.is_finite() => -4.0 / nu - 3.0 * nu.ln(),
        ErrorFamily::StudentT { nu } if nu > STUDENT_NU_FLOOR && nu.is_finite() => {
            STUDENT_NU_PRIOR_RATE.ln() - STUDENT_NU_PRIOR_RATE * (nu - STUDENT_NU_FLOOR)
        }
        _ => f64::NEG_INFINITY,
    }
}

/// Log target on the unconstrained scale: likelihood, the prior above and
/// the Jacobian pieces for β, φ and ν. The prior term −11 ln σ is already
/// expressed on γ, so ln σ is not added a second time.
pub fn log_posterior_unconstrained(y: &[f64], h: &[f64], xi: &TransformedParams, kind: FamilyKind) -> Result<f64> {
    let params = from_unconstrained(xi, kind);
    let prior = log_prior(&params);
    if !prior.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let like = log_joint(y, h, &params)?;
    Ok(like + prior + log_jacobian(xi, kind) - xi.gamma)
}

/// A simulated path: returns and the latent log-volatilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub y: Vec<f64>,
    pub h: Vec<f64>,
}

/// Draws (y, h) of length `n` from the model.
pub fn simulate<R: Rng + ?Sized>(params: &ModelParams, n: usize, rng: &mut R) -> Result<Simulation> {
    params.validate()?;
    if n == 0 {
        return Err(SvError::Domain("simulation length must be at least 1".into()));
    }
    let mut h = Vec::with_capacity(n);
    let z0: f64 = rng.sample(StandardNormal);
    h.push(params.stationary_variance().sqrt() * z0);
    for t in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        h.push(params.phi * h[t - 1] + params.sigma * z);
    }
    let mut eps = vec![0.0; n];
    sample_errors(&params.family, rng, &mut eps);
    let y = h
        .iter()
        .zip(&eps)
        .map(|(&ht, &e)| params.beta * (0.5 * ht).exp() * e)
        .collect();
    Ok(Simulation { y, h })
}
