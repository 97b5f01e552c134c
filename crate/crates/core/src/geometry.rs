//! Analytic gradients and expected-information metrics for both blocks of
//! the sampler.
//!
//! The volatility block works on h with θ fixed: its gradient is `s − r`
//! (observation score minus AR(1) precision times h) and its metric is a
//! symmetric tridiagonal matrix. The parameter block works on
//! ξ = (δ, γ, α[, p]) with h fixed; [`ParamBlock`] caches the sufficient
//! statistics of (y, h) so repeated evaluations in ξ only touch the data
//! once per heavy-tailed term.
//!
//! Fisher entries for GED:
//!
//! ```text
//! −E ∂²/∂δ²   = nν
//! −E ∂²/∂δ∂p  = −n {1 + ψ(1+1/ν) + ln 2 − K},   K = ln 2 − ½ψ(1/ν) + (3/2)ψ(3/ν)
//! −E ∂²/∂p²   = n {a(a+1)[ψ₁(a+2) + (ψ(a+2)+c)²] − a²(ψ(a+1)+c)²},  a = 1/ν, c = ln 2 − K
//! ```
//!
//! and for Student-t:
//!
//! ```text
//! −E ∂²/∂δ²   = 2nν/(ν+3)
//! −E ∂²/∂δ∂p  = 6n(ν−4) / ((ν−2)(ν+1)(ν+3))
//! −E ∂²/∂p²   = −(n/2)(ν−4)²/(ν−2)² {(ν−3)(ν+4)/((ν+1)(ν+3)) + (ν−2)²/2 [ψ₁((ν+1)/2) − ψ₁(ν/2)]}
//! ```
//!
//! The (γ, α) block is shared by all families: 2n, 2φ and
//! 2φ² + (n−1)(1−φ²). Cross terms between (δ, p) and (γ, α) vanish.

use std::f64::consts::LN_2;

use crate::dist::{ged_ln_lambda, ged_log_norm, student_log_norm, ErrorFamily, FamilyKind, LN_SQRT_2PI};
use crate::error::{check_len, Result, SvError};
use crate::linalg::{DenseCholesky, DenseSpd, SymTridiag};
use crate::model::{ln_one_minus_tanh2, nu_from_p, ModelParams, STUDENT_NU_FLOOR, STUDENT_NU_PRIOR_RATE};
use crate::special::{psi, psi1};

/// Observation curvature −E ∂²/∂h_t² of the error law.
pub fn observation_curvature(family: &ErrorFamily) -> f64 {
    match *family {
        ErrorFamily::Gaussian => 0.5,
        ErrorFamily::Ged { nu } => 0.25 * nu,
        ErrorFamily::StudentT { nu } => nu / (2.0 * (nu + 3.0)),
    }
}

/// Return series with the per-observation quantities every block reuses.
#[derive(Debug, Clone)]
pub struct Observations {
    y: Vec<f64>,
    y2: Vec<f64>,
    ln_abs_y: Vec<f64>,
}

impl Observations {
    pub fn new(y: &[f64]) -> Self {
        Observations {
            y: y.to_vec(),
            y2: y.iter().map(|v| v * v).collect(),
            ln_abs_y: y.iter().map(|v| v.abs().ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

/// Log density of h given θ (equal to the full log f(y, h | θ)) and its
/// gradient, written into `grad`.
pub fn vol_log_density_and_grad(obs: &Observations, h: &[f64], params: &ModelParams, grad: &mut [f64]) -> f64 {
    let n = h.len();
    let ln_beta = params.beta.ln();
    let mut obs_sum = 0.0;
    match params.family {
        ErrorFamily::Gaussian => {
            let inv_b2 = 1.0 / (params.beta * params.beta);
            for t in 0..n {
                let e2 = obs.y2[t] * (-h[t]).exp() * inv_b2;
                obs_sum -= 0.5 * (h[t] + e2);
                grad[t] = -0.5 + 0.5 * e2;
            }
            obs_sum -= n as f64 * (LN_SQRT_2PI + ln_beta);
        }
        ErrorFamily::Ged { nu } => {
            let shift = ln_beta + ged_ln_lambda(nu);
            for t in 0..n {
                let u = (nu * (obs.ln_abs_y[t] - 0.5 * h[t] - shift)).exp();
                obs_sum -= 0.5 * (h[t] + u);
                grad[t] = -0.5 + 0.25 * nu * u;
            }
            obs_sum += n as f64 * (ged_log_norm(nu) - ln_beta);
        }
        ErrorFamily::StudentT { nu } => {
            let inv = 1.0 / (params.beta * params.beta * (nu - 2.0));
            let half_np1 = 0.5 * (nu + 1.0);
            for t in 0..n {
                let w = obs.y2[t] * (-h[t]).exp() * inv;
                obs_sum -= 0.5 * h[t] + half_np1 * w.ln_1p();
                grad[t] = -0.5 + half_np1 * w / (1.0 + w);
            }
            obs_sum += n as f64 * (student_log_norm(nu) - ln_beta);
        }
    }
    obs_sum + ar1_log_density_and_subtract_grad(h, params.phi, params.sigma, grad)
}

/// AR(1) log density; subtracts r (the precision-weighted residuals) from `grad`.
fn ar1_log_density_and_subtract_grad(h: &[f64], phi: f64, sigma: f64, grad: &mut [f64]) -> f64 {
    let n = h.len();
    let inv_s2 = 1.0 / (sigma * sigma);
    let one_m_phi2 = 1.0 - phi * phi;
    let mut q = 0.0;
    if n == 1 {
        grad[0] -= one_m_phi2 * h[0] * inv_s2;
    } else {
        for t in 1..n {
            let d = h[t] - phi * h[t - 1];
            q += d * d;
            // d enters r_t with +1 and r_{t−1} with −φ
            grad[t] -= d * inv_s2;
            grad[t - 1] += phi * d * inv_s2;
        }
        grad[0] -= one_m_phi2 * h[0] * inv_s2;
    }
    let nf = n as f64;
    -nf * LN_SQRT_2PI - nf * sigma.ln() + 0.5 * one_m_phi2.ln() - 0.5 * inv_s2 * (one_m_phi2 * h[0] * h[0] + q)
}

/// ∇_h ln f(y, h | θ) = s − r.
pub fn grad_h(y: &[f64], h: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    check_len(y.len(), h.len())?;
    params.validate()?;
    let obs = Observations::new(y);
    let mut g = vec![0.0; h.len()];
    vol_log_density_and_grad(&obs, h, params, &mut g);
    Ok(g)
}

/// Expected-information metric of the volatility block.
pub fn metric_h(n: usize, params: &ModelParams) -> Result<SymTridiag> {
    if n < 2 {
        return Err(SvError::Domain("metric_h needs n >= 2".into()));
    }
    params.validate()?;
    let c = observation_curvature(&params.family);
    let inv_s2 = 1.0 / (params.sigma * params.sigma);
    let mut diag = vec![c + inv_s2 * (1.0 + params.phi * params.phi); n];
    diag[0] = c + inv_s2;
    diag[n - 1] = c + inv_s2;
    SymTridiag::new(diag, vec![-params.phi * inv_s2; n - 1])
}

/// ν·(ν/λ)·dλ/dν for the GED scale.
pub(crate) fn ged_k(nu: f64) -> f64 {
    LN_2 - 0.5 * psi(1.0 / nu) + 1.5 * psi(3.0 / nu)
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Cached sufficient statistics of (y, h) for evaluating the parameter
/// block target at many ξ.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    kind: FamilyKind,
    n: usize,
    /// ln |y_t| − h_t/2, i.e. ln |β ε_t|.
    ln_a: Vec<f64>,
    /// Σ a_t².
    a2_sum: f64,
    sum_h: f64,
    h1_sq: f64,
    /// Σ_{t≥2} h_{t−1}², Σ h_t h_{t−1}, Σ_{t≥2} h_t².
    s00: f64,
    s01: f64,
    s11: f64,
}

/// Value and gradient split into the pieces of the transformed target.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEvaluation {
    pub log_lik: f64,
    pub log_prior: f64,
    pub log_jacobian: f64,
    pub grad_lik: Vec<f64>,
    pub grad_prior: Vec<f64>,
    pub grad_jacobian: Vec<f64>,
}

impl ParamEvaluation {
    pub fn log_target(&self) -> f64 {
        self.log_lik + self.log_prior + self.log_jacobian
    }

    pub fn grad(&self) -> Vec<f64> {
        self.grad_lik
            .iter()
            .zip(&self.grad_prior)
            .zip(&self.grad_jacobian)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

impl ParamBlock {
    pub fn new(y: &[f64], h: &[f64], kind: FamilyKind) -> Result<Self> {
        check_len(y.len(), h.len())?;
        if y.is_empty() {
            return Err(SvError::Domain("empty series".into()));
        }
        Ok(Self::from_observations(&Observations::new(y), h, kind))
    }

    pub fn from_observations(obs: &Observations, h: &[f64], kind: FamilyKind) -> Self {
        let n = h.len();
        let ln_a: Vec<f64> = obs.ln_abs_y.iter().zip(h).map(|(l, ht)| l - 0.5 * ht).collect();
        let a2_sum = obs.y2.iter().zip(h).map(|(y2, ht)| y2 * (-ht).exp()).sum();
        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for w in h.windows(2) {
            s00 += w[0] * w[0];
            s01 += w[0] * w[1];
            s11 += w[1] * w[1];
        }
        ParamBlock {
            kind,
            n,
            ln_a,
            a2_sum,
            sum_h: h.iter().sum(),
            h1_sq: h[0] * h[0],
            s00,
            s01,
            s11,
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.kind.n_params()
    }

    /// Full decomposition of the target at `xi`.
    pub fn evaluate(&self, xi: &[f64]) -> ParamEvaluation {
        debug_assert_eq!(xi.len(), self.dim());
        let d = self.dim();
        let n = self.n as f64;
        let (delta, gamma, alpha) = (xi[0], xi[1], xi[2]);
        let beta = delta.exp();
        let phi = alpha.tanh();
        let inv_s2 = (-2.0 * gamma).exp();
        let one_m_phi2 = 1.0 - phi * phi;
        let ln_1mphi2 = ln_one_minus_tanh2(alpha);

        let mut grad_lik = vec![0.0; d];
        let mut grad_prior = vec![0.0; d];
        let mut grad_jacobian = vec![0.0; d];

        // AR(1) part
        let q = self.s11 - 2.0 * phi * self.s01 + phi * phi * self.s00;
        let cross = self.s01 - phi * self.s00;
        let mut log_lik = -n * LN_SQRT_2PI - n * gamma + 0.5 * ln_1mphi2
            - 0.5 * inv_s2 * (one_m_phi2 * self.h1_sq + q);
        grad_lik[1] = -n + inv_s2 * (one_m_phi2 * self.h1_sq + q);
        grad_lik[2] = -phi + phi * one_m_phi2 * self.h1_sq * inv_s2 + one_m_phi2 * cross * inv_s2;

        // observation part
        log_lik -= n * delta + 0.5 * self.sum_h;
        match self.kind {
            FamilyKind::Gaussian => {
                let e2 = self.a2_sum / (beta * beta);
                log_lik += -n * LN_SQRT_2PI - 0.5 * e2;
                grad_lik[0] = -n + e2;
            }
            FamilyKind::Ged => {
                let nu = xi[3].exp();
                let k = ged_k(nu);
                let shift = delta + ged_ln_lambda(nu);
                let (mut u_sum, mut u_ln_u) = (0.0, 0.0);
                for &la in &self.ln_a {
                    let ln_u = nu * (la - shift);
                    let u = ln_u.exp();
                    if u > 0.0 {
                        u_sum += u;
                        u_ln_u += u * ln_u;
                    }
                }
                log_lik += n * ged_log_norm(nu) - 0.5 * u_sum;
                grad_lik[0] = -n + 0.5 * nu * u_sum;
                grad_lik[3] = n / nu * (nu - k + psi(1.0 / nu) + LN_2) - 0.5 * (u_ln_u - k * u_sum);
            }
            FamilyKind::StudentT => {
                let nu = nu_from_p(xi[3], FamilyKind::StudentT);
                let inv = (-2.0 * delta).exp() / (nu - 2.0);
                let (mut log_sum, mut ratio_sum) = (0.0, 0.0);
                for &la in &self.ln_a {
                    let w = (2.0 * la).exp() * inv;
                    log_sum += w.ln_1p();
                    ratio_sum += w / (1.0 + w);
                }
                log_lik += n * student_log_norm(nu) - 0.5 * (nu + 1.0) * log_sum;
                grad_lik[0] = -n + (nu + 1.0) * ratio_sum;
                let scaled = n * (psi(0.5 * (nu + 1.0)) - psi(0.5 * nu) - 1.0 / (nu - 2.0))
                    + (nu + 1.0) / (nu - 2.0) * ratio_sum
                    - log_sum;
                grad_lik[3] = 0.5 * (nu - STUDENT_NU_FLOOR) * scaled;
            }
        }

        // prior, as a function of ξ
        let mut log_prior = -beta - 0.25 * inv_s2 - 11.0 * gamma + 19.0 * log_sigmoid(2.0 * alpha)
            + 0.5 * log_sigmoid(-2.0 * alpha);
        grad_prior[0] = -beta;
        grad_prior[1] = 0.5 * inv_s2 - 11.0;
        grad_prior[2] = 19.0 * (1.0 - phi) - 0.5 * (1.0 + phi);
        let mut log_jacobian = delta + ln_1mphi2;
        grad_jacobian[0] = 1.0;
        grad_jacobian[2] = -2.0 * phi;
        match self.kind {
            FamilyKind::Gaussian => {}
            FamilyKind::Ged => {
                let nu = xi[3].exp();
                log_prior += -4.0 / nu - 3.0 * xi[3];
                grad_prior[3] = 4.0 / nu - 3.0;
                log_jacobian += xi[3];
                grad_jacobian[3] = 1.0;
            }
            FamilyKind::StudentT => {
                let excess = xi[3].exp();
                log_prior += STUDENT_NU_PRIOR_RATE.ln() - STUDENT_NU_PRIOR_RATE * excess;
                grad_prior[3] = -STUDENT_NU_PRIOR_RATE * excess;
                log_jacobian += xi[3];
                grad_jacobian[3] = 1.0;
            }
        }

        ParamEvaluation { log_lik, log_prior, log_jacobian, grad_lik, grad_prior, grad_jacobian }
    }

    /// Log target and its gradient in one pass.
    pub fn log_target_and_grad(&self, xi: &[f64], grad: &mut [f64]) -> f64 {
        let e = self.evaluate(xi);
        for (g, v) in grad.iter_mut().zip(e.grad()) {
            *g = v;
        }
        let lt = e.log_target();
        if lt.is_nan() {
            f64::NEG_INFINITY
        } else {
            lt
        }
    }

    /// Gradient of ln f(y, h | θ) alone, in ξ.
    pub fn grad_log_lik(&self, xi: &[f64]) -> Vec<f64> {
        self.evaluate(xi).grad_lik
    }
}

/// Gradient of the transformed target (likelihood + prior + Jacobian) in ξ.
pub fn grad_theta(y: &[f64], h: &[f64], xi: &[f64], kind: FamilyKind) -> Result<Vec<f64>> {
    check_len(kind.n_params(), xi.len())?;
    Ok(ParamBlock::new(y, h, kind)?.evaluate(xi).grad())
}

/// −E of the likelihood Hessian in ξ for a series of length `n`.
pub fn metric_theta_loglik(xi: &[f64], kind: FamilyKind, n: usize) -> Result<DenseSpd> {
    check_len(kind.n_params(), xi.len())?;
    let nf = n as f64;
    let phi = xi[2].tanh();
    let one_m_phi2 = 1.0 - phi * phi;
    let mut g = DenseSpd::zeros(kind.n_params());
    g.set_sym(1, 1, 2.0 * nf);
    g.set_sym(1, 2, 2.0 * phi);
    g.set_sym(2, 2, 2.0 * phi * phi + (nf - 1.0) * one_m_phi2);
    match kind {
        FamilyKind::Gaussian => g.set_sym(0, 0, 2.0 * nf),
        FamilyKind::Ged => {
            let nu = xi[3].exp();
            let k = ged_k(nu);
            let a = 1.0 / nu;
            let c = LN_2 - k;
            g.set_sym(0, 0, nf * nu);
            g.set_sym(0, 3, -nf * (1.0 + psi(1.0 + a) + LN_2 - k));
            let pp = a * (a + 1.0) * (psi1(a + 2.0) + (psi(a + 2.0) + c).powi(2)) - a * a * (psi(a + 1.0) + c).powi(2);
            g.set_sym(3, 3, nf * pp);
        }
        FamilyKind::StudentT => {
            let nu = nu_from_p(xi[3], FamilyKind::StudentT);
            g.set_sym(0, 0, 2.0 * nf * nu / (nu + 3.0));
            g.set_sym(
                0,
                3,
                6.0 * nf * (nu - 4.0) / ((nu - 2.0) * (nu + 1.0) * (nu + 3.0)),
            );
            let brace = (nu - 3.0) * (nu + 4.0) / ((nu + 1.0) * (nu + 3.0))
                + 0.5 * (nu - 2.0).powi(2) * (psi1(0.5 * nu + 0.5) - psi1(0.5 * nu));
            g.set_sym(3, 3, -0.5 * nf * (nu - 4.0).powi(2) / (nu - 2.0).powi(2) * brace);
        }
    }
    Ok(g)
}

/// −E of the log-prior Hessian in ξ.
pub fn metric_theta_prior(xi: &[f64], kind: FamilyKind) -> Result<DenseSpd> {
    check_len(kind.n_params(), xi.len())?;
    let phi = xi[2].tanh();
    let mut g = DenseSpd::zeros(kind.n_params());
    g.set_sym(1, 1, (-2.0 * xi[1]).exp());
    g.set_sym(2, 2, 19.5 * (1.0 - phi * phi));
    match kind {
        FamilyKind::Gaussian => {}
        FamilyKind::Ged => g.set_sym(3, 3, 4.0 * (-xi[3]).exp()),
        FamilyKind::StudentT => g.set_sym(3, 3, STUDENT_NU_PRIOR_RATE * xi[3].exp()),
    }
    Ok(g)
}

/// Parameter-block metric G_θ = −E(likelihood Hessian) − E(prior Hessian).
pub fn metric_theta(xi: &[f64], kind: FamilyKind, n: usize) -> Result<DenseSpd> {
    if n < 2 {
        return Err(SvError::Domain("metric_theta needs n >= 2".into()));
    }
    Ok(metric_theta_loglik(xi, kind, n)?.add(&metric_theta_prior(xi, kind)?))
}

/// Factor of [`metric_theta`] with the jitter ladder applied; the second
/// value counts the diagonal shifts that were needed.
pub fn metric_theta_factor(xi: &[f64], kind: FamilyKind, n: usize) -> Result<(DenseCholesky, u32)> {
    let g = metric_theta(xi, kind, n)?;
    if g.trace().is_nan() {
        return Err(SvError::NonFinite("metric_theta".into()));
    }
    g.cholesky_with_jitter()
}
