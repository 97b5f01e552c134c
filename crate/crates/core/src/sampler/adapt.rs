//! Robbins–Monro step-size adaptation on ln ε.

/// Default target acceptance rate for both blocks.
pub const DEFAULT_TARGET_ACCEPT: f64 = 0.574;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Burn-in, carrying the 0-based index of the update.
    Burnin(usize),
    Sampling,
}

/// Gain of the k-th update.
pub fn rm_gain(k: usize) -> f64 {
    (k as f64 + 10.0).powf(-0.6)
}

/// One Robbins–Monro move of ε toward the target acceptance rate, using the
/// mean of `history` (acceptance probabilities or 0/1 flags). During the
/// sampling phase ε is returned unchanged. An empty history is a no-op.
pub fn adapt_step_size(history: &[f64], target: f64, phase: Phase, eps: f64) -> f64 {
    let k = match phase {
        Phase::Sampling => return eps,
        Phase::Burnin(k) => k,
    };
    if history.is_empty() {
        return eps;
    }
    let rate = history.iter().sum::<f64>() / history.len() as f64;
    (eps.ln() + rm_gain(k) * (rate - target)).exp()
}

/// Per-block adapter fed one acceptance probability per update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeAdapter {
    eps: f64,
    target: f64,
    enabled: bool,
    updates: usize,
}

impl StepSizeAdapter {
    pub fn new(eps: f64, target: f64, enabled: bool) -> Self {
        StepSizeAdapter { eps, target, enabled, updates: 0 }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn observe(&mut self, accept_prob: f64, phase: Phase) {
        if !self.enabled || self.eps == 0.0 {
            return;
        }
        if let Phase::Burnin(_) = phase {
            self.eps = adapt_step_size(&[accept_prob], self.target, Phase::Burnin(self.updates), self.eps);
            self.updates += 1;
        }
    }
}
