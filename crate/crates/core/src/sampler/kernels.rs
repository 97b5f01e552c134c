//! MALA and simplified manifold-MALA Metropolis–Hastings kernels.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::PrecisionFactor;

/// A differentiable log density.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Writes ∇ ln f(x) into `grad` and returns ln f(x). Points outside the
    /// support return a non-finite value.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// A log density with a position-dependent metric tensor.
pub trait ManifoldDensity: LogDensity {
    type Factor: PrecisionFactor;

    /// Factor of the metric G(x) and the number of jitter shifts needed.
    fn metric_factor(&self, x: &[f64]) -> Result<(Self::Factor, u32)>;
}

/// Current state of a Langevin chain with its cached density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinPoint {
    pub x: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl LangevinPoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, x: Vec<f64>) -> Self {
        let mut grad = vec![0.0; x.len()];
        let log_density = target.log_density_and_grad(&x, &mut grad);
        LangevinPoint { x, log_density, grad }
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// State of a manifold chain: the point plus its metric factor and the
/// preconditioned gradient G⁻¹∇ ln f.
#[derive(Debug, Clone)]
pub struct ManifoldPoint<F> {
    pub point: LangevinPoint,
    pub factor: F,
    pub natural_grad: Vec<f64>,
    pub jitter: u32,
}

impl<F: PrecisionFactor> ManifoldPoint<F> {
    pub fn new<T>(target: &T, x: Vec<f64>) -> Result<Self>
    where
        T: ManifoldDensity<Factor = F> + ?Sized,
    {
        let point = LangevinPoint::new(target, x);
        let (factor, jitter) = target.metric_factor(&point.x)?;
        let natural_grad = factor.solve(&point.grad);
        Ok(ManifoldPoint { point, factor, natural_grad, jitter })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub log_alpha: f64,
    /// Proposal had a non-finite density, gradient or metric.
    pub invalid: bool,
    /// Jitter shifts applied to the proposal metric.
    pub jitter: u32,
}

impl StepOutcome {
    /// min(1, exp(log α)), the quantity step-size adaptation tracks.
    pub fn accept_prob(&self) -> f64 {
        if self.log_alpha.is_nan() {
            0.0
        } else {
            self.log_alpha.min(0.0).exp()
        }
    }
}

/// ln q(to | from) up to the shared −(d/2) ln(2πε²) constant:
/// ½ ln det G(from) − ‖to − μ(from)‖²_G / (2ε²).
fn log_q_kernel(log_det: f64, quad: f64, eps2: f64) -> f64 {
    0.5 * log_det - 0.5 * quad / eps2
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Langevin drift μ = x + (ε²/2) d.
fn drift(x: &[f64], direction: &[f64], eps: f64) -> Vec<f64> {
    let half = 0.5 * eps * eps;
    x.iter().zip(direction).map(|(xi, di)| xi + half * di).collect()
}

/// ln of the MALA acceptance ratio for a move `from` → `to`.
pub fn mala_log_alpha(from: &LangevinPoint, to: &LangevinPoint, eps: f64) -> f64 {
    let eps2 = eps * eps;
    let mu_from = drift(&from.x, &from.grad, eps);
    let mu_to = drift(&to.x, &to.grad, eps);
    let fwd: Vec<f64> = to.x.iter().zip(&mu_from).map(|(a, b)| a - b).collect();
    let rev: Vec<f64> = from.x.iter().zip(&mu_to).map(|(a, b)| a - b).collect();
    let log_q_fwd = log_q_kernel(0.0, sum_sq(&fwd), eps2);
    let log_q_rev = log_q_kernel(0.0, sum_sq(&rev), eps2);
    (to.log_density + log_q_rev) - (from.log_density + log_q_fwd)
}

/// One MALA transition: propose x + (ε²/2)∇ln f(x) + εz, accept with the
/// Metropolis–Hastings ratio. Non-finite proposals are rejected.
pub fn mala_step<T, R>(target: &T, current: &mut LangevinPoint, eps: f64, rng: &mut R) -> StepOutcome
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let mean = drift(&current.x, &current.grad, eps);
    let proposal: Vec<f64> = mean
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + eps * z
        })
        .collect();
    let u: f64 = rng.random();
    let candidate = LangevinPoint::new(target, proposal);
    if !candidate.is_finite() {
        return StepOutcome { accepted: false, log_alpha: f64::NEG_INFINITY, invalid: true, jitter: 0 };
    }
    let log_alpha = mala_log_alpha(current, &candidate, eps);
    let accepted = u.ln() < log_alpha;
    if accepted {
        *current = candidate;
    }
    StepOutcome { accepted, log_alpha, invalid: false, jitter: 0 }
}

/// ln of the simplified-MMALA acceptance ratio, using the metric at each
/// conditioning point for the proposal density in that direction.
pub fn mmala_log_alpha<F: PrecisionFactor>(from: &ManifoldPoint<F>, to: &ManifoldPoint<F>, eps: f64) -> f64 {
    let eps2 = eps * eps;
    let mu_from = drift(&from.point.x, &from.natural_grad, eps);
    let mu_to = drift(&to.point.x, &to.natural_grad, eps);
    let fwd: Vec<f64> = to.point.x.iter().zip(&mu_from).map(|(a, b)| a - b).collect();
    let rev: Vec<f64> = from.point.x.iter().zip(&mu_to).map(|(a, b)| a - b).collect();
    let log_q_fwd = log_q_kernel(from.factor.log_det(), from.factor.quad_form(&fwd), eps2);
    let log_q_rev = log_q_kernel(to.factor.log_det(), to.factor.quad_form(&rev), eps2);
    (to.point.log_density + log_q_rev) - (from.point.log_density + log_q_fwd)
}

/// One simplified-MMALA transition: propose from
/// N(x + (ε²/2)G⁻¹(x)∇ln f(x), ε²G⁻¹(x)) and accept with the MH ratio.
pub fn mmala_step<T, R>(target: &T, current: &mut ManifoldPoint<T::Factor>, eps: f64, rng: &mut R) -> StepOutcome
where
    T: ManifoldDensity + ?Sized,
    R: Rng + ?Sized,
{
    let mean = drift(&current.point.x, &current.natural_grad, eps);
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise = current.factor.inverse_transpose_mul(&z);
    let proposal: Vec<f64> = mean.iter().zip(&noise).map(|(m, w)| m + eps * w).collect();
    let u: f64 = rng.random();
    let reject = |jitter| StepOutcome { accepted: false, log_alpha: f64::NEG_INFINITY, invalid: true, jitter };
    let point = LangevinPoint::new(target, proposal);
    if !point.is_finite() {
        return reject(0);
    }
    let (factor, jitter) = match target.metric_factor(&point.x) {
        Ok(f) => f,
        Err(_) => return reject(0),
    };
    let natural_grad = factor.solve(&point.grad);
    if !natural_grad.iter().all(|g| g.is_finite()) {
        return reject(jitter);
    }
    let candidate = ManifoldPoint { point, factor, natural_grad, jitter };
    let log_alpha = mmala_log_alpha(current, &candidate, eps);
    let accepted = u.ln() < log_alpha;
    if accepted {
        *current = candidate;
    }
    StepOutcome { accepted, log_alpha, invalid: false, jitter }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseCholesky, DenseSpd, IdentityFactor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
            }
            -0.5 * sum_sq(x)
        }
    }

    impl ManifoldDensity for StdNormal {
        type Factor = IdentityFactor;
        fn metric_factor(&self, _x: &[f64]) -> Result<(IdentityFactor, u32)> {
            Ok((IdentityFactor(self.0), 0))
        }
    }

    /// N(0, 1) with the position-dependent metric G(x) = 1 + x²/2.
    struct CurvedNormal;

    impl LogDensity for CurvedNormal {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -x[0];
            -0.5 * x[0] * x[0]
        }
    }

    impl ManifoldDensity for CurvedNormal {
        type Factor = DenseCholesky;
        fn metric_factor(&self, x: &[f64]) -> Result<(DenseCholesky, u32)> {
            let g = DenseSpd::from_rows(&[&[1.0 + 0.5 * x[0] * x[0]]])?;
            Ok((g.cholesky()?, 0))
        }
    }

    #[test]
    fn vanishing_step_always_accepts() {
        let target = StdNormal(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = LangevinPoint::new(&target, vec![0.4, -1.1, 2.0]);
        let mut m = ManifoldPoint::new(&CurvedNormal, vec![0.8]).unwrap();
        for _ in 0..100 {
            let o = mala_step(&target, &mut p, 1e-8, &mut rng);
            assert!(o.log_alpha >= -1e-6);
            let o = mmala_step(&CurvedNormal, &mut m, 1e-8, &mut rng);
            assert!(o.log_alpha >= -1e-6);
        }
    }

    #[test]
    fn mala_on_standard_normal() {
        let target = StdNormal(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = LangevinPoint::new(&target, vec![0.0]);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            mala_step(&target, &mut p, 1.0, &mut rng);
            s += p.x[0];
            s2 += p.x[0] * p.x[0];
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn mala_proposal_ratio_by_hand() {
        // quadratic target ln f = −x²/2 in 1-d, so ∇ = −x and μ(x) = x(1 − ε²/2)
        let target = StdNormal(1);
        let (x, x2, eps) = (0.3, 1.1, 0.7);
        let from = LangevinPoint::new(&target, vec![x]);
        let to = LangevinPoint::new(&target, vec![x2]);
        let c = 1.0 - eps * eps / 2.0;
        let log_q_fwd = -(x2 - c * x).powi(2) / (2.0 * eps * eps);
        let log_q_rev = -(x - c * x2).powi(2) / (2.0 * eps * eps);
        let want = (-x2 * x2 / 2.0 + log_q_rev) - (-x * x / 2.0 + log_q_fwd);
        assert!((mala_log_alpha(&from, &to, eps) - want).abs() < 1e-14);
    }

    #[test]
    fn identity_metric_reproduces_mala() {
        let target = StdNormal(4);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let x0 = vec![1.0, -2.0, 0.5, 3.0];
        let mut p = LangevinPoint::new(&target, x0.clone());
        let mut m = ManifoldPoint::new(&target, x0).unwrap();
        for _ in 0..5000 {
            let o1 = mala_step(&target, &mut p, 0.9, &mut a);
            let o2 = mmala_step(&target, &mut m, 0.9, &mut b);
            assert_eq!(o1.accepted, o2.accepted);
            assert_eq!(o1.log_alpha.to_bits(), o2.log_alpha.to_bits());
            assert_eq!(p.x, m.point.x);
        }
    }

    #[test]
    fn curved_metric_chain_targets_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = ManifoldPoint::new(&CurvedNormal, vec![0.0]).unwrap();
        let n = 200_000;
        let (mut s, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            mmala_step(&CurvedNormal, &mut m, 1.3, &mut rng);
            let x = m.point.x[0];
            s += x;
            s2 += x * x;
            s4 += x.powi(4);
        }
        let n = n as f64;
        assert!((s / n).abs() < 0.03);
        assert!((s2 / n - 1.0).abs() < 0.05, "var {}", s2 / n);
        assert!((s4 / n - 3.0).abs() < 0.3, "m4 {}", s4 / n);
    }

    #[test]
    fn mmala_ratio_by_hand_in_two_dimensions() {
        // ln f = −½ xᵀAx with metric G(x) = A + diag(x₁², x₂²)
        struct Quad;
        const A: [[f64; 2]; 2] = [[2.0, 0.6], [0.6, 1.0]];
        impl LogDensity for Quad {
            fn dim(&self) -> usize {
                2
            }
            fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
                g[0] = -(A[0][0] * x[0] + A[0][1] * x[1]);
                g[1] = -(A[1][0] * x[0] + A[1][1] * x[1]);
                0.5 * (x[0] * g[0] + x[1] * g[1])
            }
        }
        impl ManifoldDensity for Quad {
            type Factor = DenseCholesky;
            fn metric_factor(&self, x: &[f64]) -> Result<(DenseCholesky, u32)> {
                let g = DenseSpd::from_rows(&[&[A[0][0] + x[0] * x[0], A[0][1]], &[A[1][0], A[1][1] + x[1] * x[1]]])?;
                Ok((g.cholesky()?, 0))
            }
        }
        let eps: f64 = 0.8;
        let x = [0.5, -0.4];
        let y = [0.1, 0.7];
        let from = ManifoldPoint::new(&Quad, x.to_vec()).unwrap();
        let to = ManifoldPoint::new(&Quad, y.to_vec()).unwrap();

        // scripted: explicit 2×2 inverse and determinant
        let logf = |p: [f64; 2]| -0.5 * (A[0][0] * p[0] * p[0] + 2.0 * A[0][1] * p[0] * p[1] + A[1][1] * p[1] * p[1]);
        let grad = |p: [f64; 2]| [-(A[0][0] * p[0] + A[0][1] * p[1]), -(A[1][0] * p[0] + A[1][1] * p[1])];
        let metric = |p: [f64; 2]| [[A[0][0] + p[0] * p[0], A[0][1]], [A[1][0], A[1][1] + p[1] * p[1]]];
        let log_q = |to: [f64; 2], from: [f64; 2]| {
            let g = metric(from);
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
            let d = grad(from);
            let mu = [
                from[0] + 0.5 * eps * eps * (inv[0][0] * d[0] + inv[0][1] * d[1]),
                from[1] + 0.5 * eps * eps * (inv[1][0] * d[0] + inv[1][1] * d[1]),
            ];
            let r = [to[0] - mu[0], to[1] - mu[1]];
            let quad = r[0] * (g[0][0] * r[0] + g[0][1] * r[1]) + r[1] * (g[1][0] * r[0] + g[1][1] * r[1]);
            0.5 * det.ln() - quad / (2.0 * eps * eps)
        };
        let want = logf(y) + log_q(x, y) - logf(x) - log_q(y, x);
        let got = mmala_log_alpha(&from, &to, eps);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn non_finite_proposal_is_rejected() {
        struct HalfLine;
        impl LogDensity for HalfLine {
            fn dim(&self) -> usize {
                1
            }
            fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 1.0 / x[0] - 1.0;
                if x[0] > 0.0 {
                    x[0].ln() - x[0]
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = LangevinPoint::new(&HalfLine, vec![0.05]);
        let mut invalid = 0;
        for _ in 0..1000 {
            let o = mala_step(&HalfLine, &mut p, 0.5, &mut rng);
            invalid += o.invalid as usize;
            assert!(p.x[0] > 0.0);
        }
        assert!(invalid > 0);
    }
}
