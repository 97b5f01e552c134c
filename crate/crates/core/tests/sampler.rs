mod common;

use common::{mean, report};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use sv_langevin::diagnostics::ess;
use sv_langevin::dist::{ErrorFamily, FamilyKind};
use sv_langevin::io::chain_csv;
use sv_langevin::linalg::{DenseCholesky, DenseSpd};
use sv_langevin::model::{log_posterior_unconstrained, simulate, to_unconstrained, ModelParams, TransformedParams};
use sv_langevin::sampler::{
    mala_step, mmala_step, run_chain, ChainInit, LangevinPoint, LogDensity, ManifoldDensity, ManifoldPoint, McmcConfig,
    Scheme,
};
use sv_langevin::{SvError, SvRng};

struct StdNormal;

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        1
    }
    fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        g[0] = -x[0];
        -0.5 * x[0] * x[0]
    }
}

impl ManifoldDensity for StdNormal {
    type Factor = DenseCholesky;
    fn metric_factor(&self, x: &[f64]) -> sv_langevin::Result<(DenseCholesky, u32)> {
        // position-dependent metric, so both conditioning points matter
        Ok((DenseSpd::from_rows(&[&[0.6 + 0.4 * x[0] * x[0]]])?.cholesky()?, 0))
    }
}

const GRID_LO: f64 = -3.0;
const GRID_WIDTH: f64 = 0.5;
const GRID_CELLS: usize = 12;

fn cell(x: f64) -> Option<usize> {
    let c = ((x - GRID_LO) / GRID_WIDTH).floor();
    (c >= 0.0 && (c as usize) < GRID_CELLS).then_some(c as usize)
}

/// Checks N(i→j) ≈ N(j→i) for all cell pairs with enough traffic, and that
/// the standardized asymmetries have a chi-square-like total.
fn check_balance(counts: &[[u64; GRID_CELLS]; GRID_CELLS], label: &str) {
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for i in 0..GRID_CELLS {
        for j in i + 1..GRID_CELLS {
            let (a, b) = (counts[i][j] as f64, counts[j][i] as f64);
            if a + b < 50.0 {
                continue;
            }
            let z = (a - b) / (a + b).sqrt();
            assert!(z.abs() < 5.0, "{label}: cells {i}->{j} {a} vs {b}");
            chi2 += z * z;
            dof += 1;
        }
    }
    report(&format!("  detailed balance {label}: chi2 {chi2:.1} over {dof} pairs"));
    assert!(dof > 10);
    // generous: mean dof, sd sqrt(2 dof), and chain correlation inflates it
    assert!(chi2 < 3.0 * dof as f64 + 6.0 * (2.0 * dof as f64).sqrt(), "{label}: chi2 {chi2}");
}

#[test]
fn detailed_balance_on_a_grid() {
    let steps = 1_000_000;
    let mut counts = [[0u64; GRID_CELLS]; GRID_CELLS];
    let mut rng = SvRng::seed_from_u64(1);
    let mut p = LangevinPoint::new(&StdNormal, vec![0.0]);
    for _ in 0..steps {
        let from = cell(p.x[0]);
        mala_step(&StdNormal, &mut p, 1.4, &mut rng);
        if let (Some(a), Some(b)) = (from, cell(p.x[0])) {
            counts[a][b] += 1;
        }
    }
    check_balance(&counts, "MALA");

    let mut counts = [[0u64; GRID_CELLS]; GRID_CELLS];
    let mut m = ManifoldPoint::new(&StdNormal, vec![0.0]).unwrap();
    for _ in 0..steps {
        let from = cell(m.point.x[0]);
        mmala_step(&StdNormal, &mut m, 1.4, &mut rng);
        if let (Some(a), Some(b)) = (from, cell(m.point.x[0])) {
            counts[a][b] += 1;
        }
    }
    check_balance(&counts, "MMALA");
}

/// N(0, Σ) with precision eigenvalues 100 and 1 and the constant metric Σ⁻¹.
struct Skewed;

const PREC: [[f64; 2]; 2] = [[50.5, 49.5], [49.5, 50.5]];

impl LogDensity for Skewed {
    fn dim(&self) -> usize {
        2
    }
    fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        g[0] = -(PREC[0][0] * x[0] + PREC[0][1] * x[1]);
        g[1] = -(PREC[1][0] * x[0] + PREC[1][1] * x[1]);
        0.5 * (x[0] * g[0] + x[1] * g[1])
    }
}

impl ManifoldDensity for Skewed {
    type Factor = DenseCholesky;
    fn metric_factor(&self, _x: &[f64]) -> sv_langevin::Result<(DenseCholesky, u32)> {
        Ok((DenseSpd::from_rows(&[&PREC[0], &PREC[1]])?.cholesky()?, 0))
    }
}

#[test]
fn metric_preconditioning_beats_plain_mala() {
    let eps = 1.5;
    let steps = 20_000;
    let mut rng = SvRng::seed_from_u64(2);
    let mut p = LangevinPoint::new(&Skewed, vec![0.0, 0.0]);
    let mala: usize = (0..steps).map(|_| mala_step(&Skewed, &mut p, eps, &mut rng).accepted as usize).sum();
    let mut m = ManifoldPoint::new(&Skewed, vec![0.0, 0.0]).unwrap();
    let mmala: usize = (0..steps).map(|_| mmala_step(&Skewed, &mut m, eps, &mut rng).accepted as usize).sum();
    report(&format!("  acceptance at eps {eps}: MALA {mala}, MMALA {mmala} of {steps}"));
    assert!(mmala > mala);
}

fn gaussian_toy() -> (Vec<f64>, ModelParams, Vec<f64>) {
    let params = ModelParams::new(0.65, 0.9, 0.3, ErrorFamily::Gaussian).unwrap();
    let mut rng = SvRng::seed_from_u64(3);
    let sim = simulate(&params, 30, &mut rng).unwrap();
    (sim.y, params, sim.h)
}

/// Random-walk Metropolis within Gibbs on (h, ξ), using only the model-level
/// log posterior. Returns φ draws.
fn reference_phi_draws(y: &[f64], params: &ModelParams, h0: &[f64], sweeps: usize, burn: usize) -> Vec<f64> {
    let kind = FamilyKind::Gaussian;
    let mut rng = SvRng::seed_from_u64(4);
    let mut h = h0.to_vec();
    let mut xi = to_unconstrained(params).to_vec(kind);
    let lp = |h: &[f64], xi: &[f64]| {
        log_posterior_unconstrained(y, h, &TransformedParams::from_slice(xi, kind).unwrap(), kind).unwrap()
    };
    let mut cur = lp(&h, &xi);
    let step_h = 0.8;
    let step_xi = [0.08, 0.25, 0.3];
    let mut out = Vec::with_capacity(sweeps - burn);
    for s in 0..sweeps {
        for t in 0..h.len() {
            let old = h[t];
            h[t] += step_h * rng.sample::<f64, _>(StandardNormal);
            let new = lp(&h, &xi);
            if rng.random::<f64>().ln() < new - cur {
                cur = new;
            } else {
                h[t] = old;
            }
        }
        for k in 0..xi.len() {
            let old = xi[k];
            xi[k] += step_xi[k] * rng.sample::<f64, _>(StandardNormal);
            let new = lp(&h, &xi);
            if rng.random::<f64>().ln() < new - cur {
                cur = new;
            } else {
                xi[k] = old;
            }
        }
        if s >= burn {
            out.push(xi[2].tanh());
        }
    }
    out
}

#[test]
fn hybrid_matches_reference_sampler() {
    let (y, params, h) = gaussian_toy();
    let reference = reference_phi_draws(&y, &params, &h, 400_000, 20_000);
    let cfg = McmcConfig { n_iter: 110_000, burn_in: 10_000, eps_vol: 0.3, ..McmcConfig::default() };
    let chain = run_chain(&y, &ChainInit { h, params }, &cfg, &mut SvRng::seed_from_u64(5)).unwrap();
    let hybrid = chain.column(1);
    let se = |x: &[f64]| common::sample_sd(x) / ess(x).unwrap().sqrt();
    let (m_ref, m_hyb) = (mean(&reference), mean(&hybrid));
    let combined = (se(&reference).powi(2) + se(&hybrid).powi(2)).sqrt();
    report(&format!(
        "  posterior mean phi: hybrid {m_hyb:.4}, reference {m_ref:.4}, combined se {combined:.4}, acceptance {:.2}/{:.2}",
        chain.accept_rate_vol, chain.accept_rate_par
    ));
    assert!((m_ref - m_hyb).abs() <= 3.0 * combined);
}

fn tiny_series() -> (Vec<f64>, ChainInit) {
    let params = ModelParams::new(0.65, 0.98, 0.15, ErrorFamily::StudentT { nu: 7.0 }).unwrap();
    let sim = simulate(&params, 5, &mut SvRng::seed_from_u64(6)).unwrap();
    (sim.y, ChainInit { h: sim.h, params })
}

#[test]
fn kept_draw_counts() {
    let (y, init) = tiny_series();
    let mut rng = SvRng::seed_from_u64(7);
    let a = run_chain(&y, &init, &McmcConfig { n_iter: 20_000, burn_in: 10_000, thin: 1, ..Default::default() }, &mut rng).unwrap();
    assert_eq!(a.len(), 10_000);
    let b = run_chain(&y, &init, &McmcConfig { n_iter: 150_000, burn_in: 50_000, thin: 25, ..Default::default() }, &mut rng).unwrap();
    assert_eq!(b.len(), 4000);
    assert_eq!(b.h_last.len(), 4000);
    for r in [a.accept_rate_vol, a.accept_rate_par, b.accept_rate_vol, b.accept_rate_par] {
        assert!((0.0..=1.0).contains(&r));
    }
}

#[test]
fn same_seed_gives_identical_output() {
    let (y, init) = tiny_series();
    for scheme in [Scheme::Mala, Scheme::Hybrid, Scheme::Manifold] {
        let cfg = McmcConfig { n_iter: 3000, burn_in: 1000, thin: 2, scheme, store_h: true, ..Default::default() };
        let a = run_chain(&y, &init, &cfg, &mut SvRng::seed_from_u64(8)).unwrap();
        let b = run_chain(&y, &init, &cfg, &mut SvRng::seed_from_u64(8)).unwrap();
        assert_eq!(chain_csv(&a), chain_csv(&b));
        assert_eq!(a.h_draws, b.h_draws);
        assert_eq!(a.final_h, b.final_h);
        assert_eq!(a.final_eps_par.to_bits(), b.final_eps_par.to_bits());
    }
}

#[test]
fn zero_parameter_step_freezes_theta() {
    let (y, init) = tiny_series();
    let cfg = McmcConfig { n_iter: 2000, burn_in: 500, eps_par: 0.0, ..Default::default() };
    let out = run_chain(&y, &init, &cfg, &mut SvRng::seed_from_u64(9)).unwrap();
    let first = out.theta_draws[0];
    assert!(out.theta_draws.iter().all(|p| *p == first));
    assert!((first.phi - init.params.phi).abs() < 1e-12);
    assert!(out.accept_rate_vol > 0.0);
}

#[test]
fn adaptation_stops_at_burn_in() {
    let (y, init) = tiny_series();
    let base = McmcConfig { n_iter: 1001, burn_in: 1000, ..Default::default() };
    let short = run_chain(&y, &init, &base, &mut SvRng::seed_from_u64(10)).unwrap();
    let long = run_chain(&y, &init, &McmcConfig { n_iter: 3000, ..base }, &mut SvRng::seed_from_u64(10)).unwrap();
    assert_eq!(short.final_eps_vol, long.final_eps_vol);
    assert_eq!(short.final_eps_par, long.final_eps_par);
    assert_ne!(short.final_eps_vol, McmcConfig::default().eps_vol);
}

#[test]
fn invalid_start_is_rejected_before_sampling() {
    let (y, mut init) = tiny_series();
    init.h[2] = f64::INFINITY;
    let r = run_chain(&y, &init, &McmcConfig::default(), &mut SvRng::seed_from_u64(11));
    assert!(matches!(r, Err(SvError::NonFinite(_))));
    let (y, init) = tiny_series();
    let bad = McmcConfig { burn_in: 30_000, ..Default::default() };
    assert!(matches!(run_chain(&y, &init, &bad, &mut SvRng::seed_from_u64(11)), Err(SvError::Config(_))));
}

#[test]
fn ged_and_student_chains_stay_in_support() {
    for family in [ErrorFamily::Ged { nu: 1.6 }, ErrorFamily::StudentT { nu: 7.0 }] {
        let params = ModelParams::new(0.65, 0.98, 0.15, family).unwrap();
        let sim = simulate(&params, 300, &mut SvRng::seed_from_u64(12)).unwrap();
        let cfg = McmcConfig { n_iter: 4000, burn_in: 2000, ..Default::default() };
        let out = run_chain(&sim.y, &ChainInit { h: sim.h, params }, &cfg, &mut SvRng::seed_from_u64(13)).unwrap();
        for p in &out.theta_draws {
            p.validate().unwrap();
            if let ErrorFamily::StudentT { nu } = p.family {
                assert!(nu > 4.0);
            }
        }
        assert!(out.accept_rate_par > 0.2, "{family:?}: {}", out.accept_rate_par);
    }
}
