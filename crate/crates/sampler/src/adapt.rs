//! Robbins-Monro step-size adaptation for scalar random-walk updates.

use serde::{Deserialize, Serialize};

const LOG_STEP_BOUNDS: (f64, f64) = (-20.0, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptSettings {
    /// Acceptance rate the step size is steered toward.
    pub target: f64,
    /// Gain decays as `n^(-decay)`.
    pub decay: f64,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        Self { target: 0.44, decay: 0.7 }
    }
}

/// Acceptance counters over one window of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn merge(&mut self, other: &AcceptCounter) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Which part of the run an update happened in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    EarlyBurnIn,
    /// Last 20% of burn-in.
    LateBurnIn,
    Sampling,
}

/// Log step size of one scalar update plus its acceptance bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdapter {
    pub log_step: f64,
    pub late_burn_in: AcceptCounter,
    pub sampling: AcceptCounter,
}

impl ScalarAdapter {
    pub fn new(step: f64) -> Self {
        Self { log_step: step.ln(), late_burn_in: AcceptCounter::default(), sampling: AcceptCounter::default() }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    /// Records the outcome and, while adapting, moves the log step by
    /// `n^(-decay) · (accept_prob − target)`.
    pub fn observe(&mut self, accept_prob: f64, accepted: bool, iteration: u64, phase: Phase, settings: &AdaptSettings) {
        match phase {
            Phase::LateBurnIn => self.late_burn_in.record(accepted),
            Phase::Sampling => self.sampling.record(accepted),
            Phase::EarlyBurnIn => {}
        }
        if phase != Phase::Sampling {
            let gain = ((iteration + 1) as f64).powf(-settings.decay);
            let p = if accept_prob.is_nan() { 0.0 } else { accept_prob.min(1.0) };
            self.log_step = (self.log_step + gain * (p - settings.target)).clamp(LOG_STEP_BOUNDS.0, LOG_STEP_BOUNDS.1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_grow_on_high_acceptance_and_freeze_after_burn_in() {
        let s = AdaptSettings::default();
        let mut a = ScalarAdapter::new(1.0);
        a.observe(1.0, true, 0, Phase::EarlyBurnIn, &s);
        assert!((a.log_step - 0.56).abs() < 1e-12);
        let before = a.log_step;
        a.observe(0.0, false, 10, Phase::Sampling, &s);
        assert_eq!(a.log_step, before);
        assert_eq!(a.sampling.rate(), Some(0.0));
    }

    #[test]
    fn gain_decays_with_iteration() {
        let s = AdaptSettings::default();
        let mut a = ScalarAdapter::new(1.0);
        a.observe(1.0, true, 9_999, Phase::LateBurnIn, &s);
        let change = a.log_step;
        assert!((change - 0.56 * 1e4f64.powf(-0.7)).abs() < 1e-12);
        assert_eq!(a.late_burn_in.rate(), Some(1.0));
    }
}
