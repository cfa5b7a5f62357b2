//! Challenge selection: eligibility filtering and utility ranking.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{InvalidValue, ProtocolError};
use crate::types::{CallContext, ChallengeCategory, ChallengeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionPolicy {
    /// Utility cost per unit of burden (λ).
    pub burden_weight: f64,
    /// Minimum call quality for each category; missing categories have no gate.
    pub min_quality: BTreeMap<ChallengeCategory, f64>,
    pub allow_repeat: bool,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            burden_weight: 0.2,
            min_quality: BTreeMap::new(),
            allow_repeat: false,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), InvalidValue> {
        if !(self.burden_weight >= 0.0 && self.burden_weight.is_finite()) {
            return Err(InvalidValue::new(
                "burden_weight",
                format!("{} is negative", self.burden_weight),
            ));
        }
        if let Some((cat, q)) = self.min_quality.iter().find(|(_, q)| !(0.0..=1.0).contains(*q)) {
            return Err(InvalidValue::new(
                "min_quality",
                format!("{q} for {cat:?} is outside [0, 1]"),
            ));
        }
        Ok(())
    }

    fn quality_gate(&self, category: ChallengeCategory) -> f64 {
        self.min_quality.get(&category).copied().unwrap_or(0.0)
    }
}

/// How the next challenge is picked among eligible ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Highest [`utility`], ties to the smallest id.
    #[default]
    Utility,
    /// Uniformly at random; a baseline for comparing against utility ranking.
    UniformRandom,
}

/// Challenges the call can carry, sorted by id.
pub fn filter_eligible(
    catalog: &Catalog,
    ctx: &CallContext,
    used: &BTreeSet<String>,
    policy: &SelectionPolicy,
) -> Vec<ChallengeSpec> {
    let mut out: Vec<ChallengeSpec> = catalog
        .iter()
        .filter(|c| ctx.modality.satisfies(c.modality))
        .filter(|c| policy.quality_gate(c.category) <= ctx.quality)
        .filter(|c| !c.excluded_status.contains(&ctx.caller_status))
        .filter(|c| policy.allow_repeat || !used.contains(&c.id))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

pub fn suspicion_gain(suspicion: f64) -> f64 {
    0.5 + 0.5 * suspicion
}

/// Expected discrimination of a challenge, net of the effort it costs.
pub fn utility(c: &ChallengeSpec, suspicion: f64, policy: &SelectionPolicy) -> f64 {
    (1.0 - c.coverage_prior) * suspicion_gain(suspicion) - policy.burden_weight * c.burden
}

/// Argmax of [`utility`]; ties go to the lexicographically smallest id.
pub fn select_challenge<'a>(
    eligible: &'a [ChallengeSpec],
    suspicion: f64,
    policy: &SelectionPolicy,
) -> Result<&'a ChallengeSpec, ProtocolError> {
    let mut best: Option<(&ChallengeSpec, f64)> = None;
    for c in eligible {
        let u = utility(c, suspicion, policy);
        best = match best {
            Some((b, bu)) if bu > u || (bu == u && b.id <= c.id) => Some((b, bu)),
            _ => Some((c, u)),
        };
    }
    best.map(|(c, _)| c).ok_or(ProtocolError::NoEligibleChallenge)
}

pub fn select_uniform<'a, R: Rng + ?Sized>(
    eligible: &'a [ChallengeSpec],
    rng: &mut R,
) -> Result<&'a ChallengeSpec, ProtocolError> {
    if eligible.is_empty() {
        return Err(ProtocolError::NoEligibleChallenge);
    }
    Ok(&eligible[rng.random_range(0..eligible.len())])
}
