//! Suspicion scoring: decides whether a call gets challenged at all.

use serde::{Deserialize, Serialize};

use crate::error::InvalidValue;
use crate::types::SuspicionIndicators;

/// Indicator weights and the trigger threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuspicionConfig {
    pub w_new: f64,
    pub w_history: f64,
    pub w_masked: f64,
    pub w_liveness: f64,
    /// Inclusive: a score equal to the threshold triggers.
    pub trigger_threshold: f64,
}

impl Default for SuspicionConfig {
    fn default() -> Self {
        SuspicionConfig {
            w_new: 0.30,
            w_history: 0.25,
            w_masked: 0.25,
            w_liveness: 0.20,
            trigger_threshold: 0.5,
        }
    }
}

impl SuspicionConfig {
    pub fn new(
        w_new: f64,
        w_history: f64,
        w_masked: f64,
        w_liveness: f64,
        trigger_threshold: f64,
    ) -> Result<Self, InvalidValue> {
        let cfg = SuspicionConfig {
            w_new,
            w_history,
            w_masked,
            w_liveness,
            trigger_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), InvalidValue> {
        let weights = [self.w_new, self.w_history, self.w_masked, self.w_liveness];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(InvalidValue::new("weights", "weights must be nonnegative"));
        }
        // Small slack so that decimal weights like 0.3 + 0.25 + 0.25 + 0.2 pass.
        let sum: f64 = weights.iter().sum();
        if sum > 1.0 + 1e-12 {
            return Err(InvalidValue::new("weights", format!("weights sum to {sum} > 1")));
        }
        if !(self.trigger_threshold > 0.0 && self.trigger_threshold <= 1.0) {
            return Err(InvalidValue::new(
                "trigger_threshold",
                format!("{} is outside (0, 1]", self.trigger_threshold),
            ));
        }
        Ok(())
    }
}

/// Weighted sum of raised indicators; a manual request always scores 1.
pub fn compute_suspicion(ind: &SuspicionIndicators, cfg: &SuspicionConfig) -> f64 {
    if ind.manual_request {
        return 1.0;
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let liveness = ind.liveness.clamp(0.0, 1.0);
    let score = cfg.w_new * flag(ind.new_unverified_caller)
        + cfg.w_history * flag(ind.malicious_network_history)
        + cfg.w_masked * flag(ind.identity_masked)
        + cfg.w_liveness * (1.0 - liveness);
    score.clamp(0.0, 1.0)
}

pub fn should_trigger(score: f64, cfg: &SuspicionConfig) -> bool {
    score >= cfg.trigger_threshold
}
