//! Lossy media channel: frame drops, additive noise, quantization.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::InvalidValue;
use crate::types::FeatureStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Quantization step; 0 disables quantization.
    pub quant_step: f64,
    pub noise_std: f64,
    /// Probability that a frame is replaced by the previous one.
    pub drop_prob: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::MILD
    }
}

impl ChannelConfig {
    pub const CLEAN: ChannelConfig = ChannelConfig {
        quant_step: 0.0,
        noise_std: 0.0,
        drop_prob: 0.0,
    };

    pub const MILD: ChannelConfig = ChannelConfig {
        quant_step: 0.1,
        noise_std: 0.1,
        drop_prob: 0.02,
    };

    pub fn validate(&self) -> Result<(), InvalidValue> {
        if !(self.quant_step >= 0.0 && self.quant_step.is_finite()) {
            return Err(InvalidValue::new("quant_step", "must be nonnegative"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(InvalidValue::new("noise_std", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(InvalidValue::new("drop_prob", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Nearest multiple of `step`, ties to even; `step = 0` is the identity.
pub fn quantize(v: f64, step: f64) -> f64 {
    if step == 0.0 {
        v
    } else {
        (v / step).round_ties_even() * step
    }
}

/// Passes a stream through the channel.
///
/// For every frame: one uniform draw decides a drop (a dropped frame is
/// replaced by the previous input frame; the first frame is never dropped),
/// then one Gaussian draw per value adds noise, then values are quantized.
/// Draws happen whether or not they take effect, so the draw sequence
/// depends only on the stream's shape.
pub fn apply_channel<R: Rng + ?Sized>(
    stream: &FeatureStream,
    ch: &ChannelConfig,
    rng: &mut R,
) -> FeatureStream {
    let noise = Normal::new(0.0, ch.noise_std).expect("validated std");
    let mut frames = Vec::with_capacity(stream.len());
    for (t, frame) in stream.frames.iter().enumerate() {
        let dropped = rng.random::<f64>() < ch.drop_prob && t > 0;
        let src = if dropped { &stream.frames[t - 1] } else { frame };
        frames.push(
            src.iter()
                .map(|&v| {
                    let n = noise.sample(rng);
                    quantize(if ch.noise_std > 0.0 { v + n } else { v }, ch.quant_step)
                })
                .collect(),
        );
    }
    FeatureStream {
        frames,
        frame_rate_hz: stream.frame_rate_hz,
    }
}
