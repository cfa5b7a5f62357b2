//! Callers: how genuine people and deepfake operators answer a challenge.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::InvalidValue;
use crate::types::{ChallengeSpec, FeatureStream, Frame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenuineAgentConfig {
    /// Per-dimension standard deviation of a person's performance.
    pub natural_std: f64,
    /// Largest start offset of the response inside the capture, in frames.
    pub jitter_frames: usize,
    pub reaction_latency_s: f64,
}

impl Default for GenuineAgentConfig {
    fn default() -> Self {
        GenuineAgentConfig {
            natural_std: 1.0,
            jitter_frames: 16,
            reaction_latency_s: 0.5,
        }
    }
}

impl GenuineAgentConfig {
    pub fn validate(&self) -> Result<(), InvalidValue> {
        if !(self.natural_std >= 0.0 && self.natural_std.is_finite()) {
            return Err(InvalidValue::new("natural_std", "must be nonnegative"));
        }
        if !(self.reaction_latency_s >= 0.0) {
            return Err(InvalidValue::new("reaction_latency_s", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepfakeAgentConfig {
    /// Challenges the attacker's model renders without artifacts.
    pub coverage: BTreeSet<String>,
    /// Artifact amplitude in units of the genuine natural std.
    pub artifact_amp: f64,
    /// Feature dimensions (0-based) the artifact shows up in.
    pub artifact_dims: Vec<usize>,
    /// Inserts a temporal jump in the second half of the response.
    pub discontinuity: bool,
    pub reaction_latency_s: f64,
}

impl Default for DeepfakeAgentConfig {
    fn default() -> Self {
        DeepfakeAgentConfig {
            coverage: BTreeSet::new(),
            artifact_amp: 5.0,
            artifact_dims: vec![0, 1, 2, 3],
            discontinuity: false,
            reaction_latency_s: 0.5,
        }
    }
}

impl DeepfakeAgentConfig {
    pub fn validate(&self, dim: usize) -> Result<(), InvalidValue> {
        if !(self.artifact_amp >= 0.0 && self.artifact_amp.is_finite()) {
            return Err(InvalidValue::new("artifact_amp", "must be nonnegative"));
        }
        if self.artifact_amp > 0.0 && self.artifact_dims.is_empty() {
            return Err(InvalidValue::new("artifact_dims", "empty while artifact_amp > 0"));
        }
        if let Some(d) = self.artifact_dims.iter().find(|&&d| d >= dim) {
            return Err(InvalidValue::new("artifact_dims", format!("dimension {d} out of range")));
        }
        if !(self.reaction_latency_s >= 0.0) {
            return Err(InvalidValue::new("reaction_latency_s", "must be nonnegative"));
        }
        Ok(())
    }
}

/// A caller in an episode. Deepfakes imitate a person, so they carry that
/// person's natural variability.
#[derive(Debug, Clone, Copy)]
pub enum Caller<'a> {
    Genuine(&'a GenuineAgentConfig),
    Deepfake {
        person: &'a GenuineAgentConfig,
        fake: &'a DeepfakeAgentConfig,
    },
}

impl Caller<'_> {
    pub fn reaction_latency_s(&self) -> f64 {
        match self {
            Caller::Genuine(g) => g.reaction_latency_s,
            Caller::Deepfake { fake, .. } => fake.reaction_latency_s,
        }
    }
}

/// Number of frames captured for a challenge.
pub fn capture_len(challenge: &ChallengeSpec, frame_rate_hz: f64) -> usize {
    ((challenge.response_window_s * frame_rate_hz).round() as usize).max(challenge.template.len())
}

/// The stream a caller produces while performing `challenge`.
///
/// The template plus Gaussian noise is placed at a uniformly jittered offset
/// within a noise-only capture. Uncovered challenges performed by a deepfake
/// additionally carry an additive offset on the artifact dimensions and,
/// optionally, a circular shift by `T/4` frames of the response's second half.
/// Draw order is fixed (offset, then noise row-major), so the same generator
/// state gives the same stream for any caller whose rendering is clean.
pub fn synthesize_response<R: Rng + ?Sized>(
    caller: Caller<'_>,
    challenge: &ChallengeSpec,
    frame_rate_hz: f64,
    rng: &mut R,
) -> FeatureStream {
    let person = match caller {
        Caller::Genuine(g) => g,
        Caller::Deepfake { person, .. } => person,
    };
    let t_len = challenge.template.len();
    let dim = challenge.template.dim();
    let total = capture_len(challenge, frame_rate_hz);
    let offset = rng.random_range(0..=person.jitter_frames.min(total - t_len));
    let noise = Normal::new(0.0, person.natural_std).expect("validated std");

    let mut frames: Vec<Frame> = (0..total)
        .map(|t| {
            let base = t
                .checked_sub(offset)
                .and_then(|i| challenge.template.frames.get(i));
            (0..dim)
                .map(|j| base.map_or(0.0, |b| b[j]) + noise.sample(rng))
                .collect()
        })
        .collect();

    if let Caller::Deepfake { fake, .. } = caller {
        if !fake.coverage.contains(&challenge.id) {
            let response = &mut frames[offset..offset + t_len];
            let shift = fake.artifact_amp * person.natural_std;
            for f in response.iter_mut() {
                for &d in &fake.artifact_dims {
                    f[d] += shift;
                }
            }
            if fake.discontinuity {
                response[t_len / 2..].rotate_right(t_len / 4);
            }
        }
    }
    FeatureStream {
        frames,
        frame_rate_hz,
    }
}
