//! Unit-variance error laws for the observation equation: Gaussian,
//! generalized error (exponential power) and Student-t.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvError};
use crate::special::ln_gamma;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Which error law is in use, without its tail parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Ged,
    #[serde(rename = "t")]
    StudentT,
}

impl FamilyKind {
    /// Number of model parameters: (β, φ, σ) plus ν for the heavy-tailed laws.
    pub fn n_params(self) -> usize {
        match self {
            FamilyKind::Gaussian => 3,
            _ => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Ged => "ged",
            FamilyKind::StudentT => "t",
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = SvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(FamilyKind::Gaussian),
            "ged" => Ok(FamilyKind::Ged),
            "t" | "student" | "studentt" | "student-t" => Ok(FamilyKind::StudentT),
            other => Err(SvError::Config(format!("unknown error family '{other}'"))),
        }
    }
}

/// An error law with its tail parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorFamily {
    Gaussian,
    Ged { nu: f64 },
    StudentT { nu: f64 },
}

impl ErrorFamily {
    pub fn new(kind: FamilyKind, nu: f64) -> Self {
        match kind {
            FamilyKind::Gaussian => ErrorFamily::Gaussian,
            FamilyKind::Ged => ErrorFamily::Ged { nu },
            FamilyKind::StudentT => ErrorFamily::StudentT { nu },
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            ErrorFamily::Gaussian => FamilyKind::Gaussian,
            ErrorFamily::Ged { .. } => FamilyKind::Ged,
            ErrorFamily::StudentT { .. } => FamilyKind::StudentT,
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match *self {
            ErrorFamily::Gaussian => None,
            ErrorFamily::Ged { nu } | ErrorFamily::StudentT { nu } => Some(nu),
        }
    }

    /// Density-level validity: ν > 0 for GED, ν > 2 for Student-t.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorFamily::Gaussian => Ok(()),
            ErrorFamily::Ged { nu } if nu > 0.0 && nu.is_finite() => Ok(()),
            ErrorFamily::StudentT { nu } if nu > 2.0 && nu.is_finite() => Ok(()),
            other => Err(SvError::Domain(format!("invalid tail parameter for {other:?}"))),
        }
    }

    pub fn logpdf(&self, eps: f64) -> Result<f64> {
        match *self {
            ErrorFamily::Gaussian => Ok(normal_logpdf(eps)),
            ErrorFamily::Ged { nu } => ged_logpdf(eps, nu),
            ErrorFamily::StudentT { nu } => student_logpdf(eps, nu),
        }
    }

    /// Excess kurtosis of the law, infinite where the fourth moment diverges.
    pub fn excess_kurtosis(&self) -> f64 {
        match *self {
            ErrorFamily::Gaussian => 0.0,
            ErrorFamily::Ged { nu } => {
                (ln_gamma(1.0 / nu) + ln_gamma(5.0 / nu) - 2.0 * ln_gamma(3.0 / nu)).exp() - 3.0
            }
            ErrorFamily::StudentT { nu } if nu > 4.0 => 6.0 / (nu - 4.0),
            ErrorFamily::StudentT { .. } => f64::INFINITY,
        }
    }
}

/// Scale λ of the unit-variance GED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GedScale {
    lambda: f64,
}

impl GedScale {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// λ with λ² = 2^(−2/ν) Γ(1/ν) / Γ(3/ν).
pub fn ged_lambda(nu: f64) -> Result<GedScale> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(SvError::Domain(format!("GED shape must be positive, got {nu}")));
    }
    Ok(GedScale { lambda: ged_ln_lambda(nu).exp() })
}

pub(crate) fn ged_ln_lambda(nu: f64) -> f64 {
    0.5 * (-2.0 / nu * LN_2 + ln_gamma(1.0 / nu) - ln_gamma(3.0 / nu))
}

/// Log normalizing constant ln[ν / (λ 2^(1+1/ν) Γ(1/ν))].
pub(crate) fn ged_log_norm(nu: f64) -> f64 {
    nu.ln() - ged_ln_lambda(nu) - (1.0 + 1.0 / nu) * LN_2 - ln_gamma(1.0 / nu)
}

pub fn normal_logpdf(eps: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * eps * eps
}

pub fn ged_logpdf(eps: f64, nu: f64) -> Result<f64> {
    let scale = ged_lambda(nu)?;
    Ok(ged_log_norm(nu) - 0.5 * (eps.abs() / scale.lambda).powf(nu))
}

/// Log normalizing constant of the unit-variance Student-t.
pub(crate) fn student_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (PI * (nu - 2.0)).ln()
}

pub fn student_logpdf(eps: f64, nu: f64) -> Result<f64> {
    if !(nu > 2.0) || nu.is_nan() {
        return Err(SvError::Domain(format!(
            "unit-variance Student-t needs nu > 2, got {nu}"
        )));
    }
    Ok(student_log_norm(nu) - 0.5 * (nu + 1.0) * (eps * eps / (nu - 2.0)).ln_1p())
}

/// One draw with mean 0 and variance 1 from `family`.
///
/// GED draws use |ε/λ|^ν / 2 ~ Gamma(1/ν, 1) with a random sign; Student-t
/// draws rescale a standard t by √((ν−2)/ν).
pub fn sample_error<R: Rng + ?Sized>(family: &ErrorFamily, rng: &mut R) -> f64 {
    match *family {
        ErrorFamily::Gaussian => rng.sample(StandardNormal),
        ErrorFamily::Ged { nu } => {
            let lambda = ged_ln_lambda(nu).exp();
            let g: f64 = Gamma::new(1.0 / nu, 1.0)
                .expect("GED shape validated by caller")
                .sample(rng);
            let magnitude = lambda * (2.0 * g).powf(1.0 / nu);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        }
        ErrorFamily::StudentT { nu } => {
            let t: f64 = StudentT::new(nu)
                .expect("Student-t dof validated by caller")
                .sample(rng);
            t * ((nu - 2.0) / nu).sqrt()
        }
    }
}

/// Fills `out` with independent draws from `family`.
pub fn sample_errors<R: Rng + ?Sized>(family: &ErrorFamily, rng: &mut R, out: &mut [f64]) {
    match *family {
        ErrorFamily::Gaussian => out.iter_mut().for_each(|e| *e = rng.sample(StandardNormal)),
        ErrorFamily::Ged { nu } => {
            let lambda = ged_ln_lambda(nu).exp();
            let gamma = Gamma::new(1.0 / nu, 1.0).expect("GED shape validated by caller");
            for e in out.iter_mut() {
                let g: f64 = gamma.sample(rng);
                let magnitude = lambda * (2.0 * g).powf(1.0 / nu);
                *e = if rng.random::<bool>() { magnitude } else { -magnitude };
            }
        }
        ErrorFamily::StudentT { nu } => {
            let t = StudentT::new(nu).expect("Student-t dof validated by caller");
            let scale = ((nu - 2.0) / nu).sqrt();
            out.iter_mut().for_each(|e| *e = t.sample(rng) * scale);
        }
    }
}
