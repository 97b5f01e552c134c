#![allow(dead_code)]

use std::io::Write;

/// Prints one line past the test harness capture, so it shows in plain
/// `cargo test` output.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn criterion_line(id: u32, pass: bool, detail: &str) {
    report(&format!("ACCEPTANCE criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" }));
}

/// Composite Simpson rule on [a, b] with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// ∫ f over ℝ for a symmetric-support density, via x = t/(1−t) on each half.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, panels: usize) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        let v = (f(x) + f(-x)) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    simpson(g, 0.0, 1.0, panels)
}

/// Complementary error function, |error| < 1.2e−7 (Chebyshev fit).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let c = cdf(*x);
        d = d.max(((i + 1) as f64 / n - c).abs()).max((c - i as f64 / n).abs());
    }
    d
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
