//! Central finite differences with Richardson extrapolation. Used as the
//! independent check on every analytic gradient.

use crate::error::{Result, SvError};

#[derive(Debug, Clone, Copy)]
pub struct StepPolicy {
    /// Initial step relative to max(1, |x_i|).
    pub rel_step: f64,
    /// Number of halvings combined in the Richardson table.
    pub levels: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { rel_step: 1e-2, levels: 4 }
    }
}

/// ∇f(x) by central differences refined with Richardson extrapolation.
pub fn fd_gradient<F>(f: F, x: &[f64], policy: StepPolicy) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let levels = policy.levels.max(1);
    let mut point = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut h = policy.rel_step * x[i].abs().max(1.0);
        let mut table: Vec<f64> = Vec::with_capacity(levels);
        for _ in 0..levels {
            point[i] = x[i] + h;
            let up = f(&point);
            point[i] = x[i] - h;
            let down = f(&point);
            point[i] = x[i];
            if !up.is_finite() || !down.is_finite() {
                return Err(SvError::NonFinite(format!("target at coordinate {i}, step {h}")));
            }
            let mut estimate = (up - down) / (2.0 * h);
            // Neville update: error terms are even powers of h
            let mut factor = 4.0;
            for prev in table.iter_mut() {
                let refined = estimate + (estimate - *prev) / (factor - 1.0);
                *prev = estimate;
                estimate = refined;
                factor *= 4.0;
            }
            table.push(estimate);
            h *= 0.5;
        }
        out.push(*table.last().expect("levels >= 1"));
    }
    Ok(out)
}
