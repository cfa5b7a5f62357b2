//! Locating the response segment inside a captured stream.
//!
//! A window of the template's length slides over the stream; each window is
//! compared to the template by normalized cross-correlation of the
//! mean-centered, row-major flattened values. The best window wins and the
//! earliest offset wins ties.

use serde::{Deserialize, Serialize};

use crate::error::ExtractionError;
use crate::types::{ActivityTemplate, ChallengeSpec, FeatureStream, Frame, ResponseSegment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// Correlation floor below which nothing is reported. `None` disables it.
    pub min_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub segment: ResponseSegment,
    /// Normalized cross-correlation in [-1, 1].
    pub match_score: f64,
}

/// Mean-centered template with its energy, reusable across windows.
#[derive(Debug, Clone)]
pub struct CenteredTemplate {
    values: Vec<f64>,
    energy: f64,
    /// Largest raw magnitude, the yardstick for the flatness test.
    scale: f64,
    len: usize,
    dim: usize,
}

impl CenteredTemplate {
    pub fn new(template: &ActivityTemplate) -> Self {
        let flat: Vec<f64> = template.frames.iter().flatten().copied().collect();
        let values = centered(&flat);
        let energy = values.iter().map(|v| v * v).sum();
        CenteredTemplate {
            values,
            energy,
            scale: flat.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            len: template.len(),
            dim: template.dim(),
        }
    }

    /// Correlation of the window starting at `offset`.
    fn correlate(&self, frames: &[Frame], offset: usize) -> f64 {
        let window = &frames[offset..offset + self.len];
        let n = (self.len * self.dim) as f64;
        let mean = window.iter().flatten().sum::<f64>() / n;
        let mut num = 0.0;
        let mut energy = 0.0;
        let mut scale: f64 = 0.0;
        for (w, t) in window.iter().flatten().zip(&self.values) {
            let c = w - mean;
            num += c * t;
            energy += c * c;
            scale = scale.max(w.abs());
        }
        if is_flat(energy, scale, n) || is_flat(self.energy, self.scale, n) {
            return 0.0;
        }
        (num / (energy * self.energy).sqrt()).clamp(-1.0, 1.0)
    }
}

fn centered(flat: &[f64]) -> Vec<f64> {
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    flat.iter().map(|v| v - mean).collect()
}

/// Whether centered energy is indistinguishable from rounding noise, which
/// is how a constant window shows up after subtracting its computed mean.
pub fn is_flat(energy: f64, scale: f64, n: f64) -> bool {
    let tol = 64.0 * f64::EPSILON * scale;
    energy <= n * tol * tol
}

/// Finds the window of `stream` that best matches the challenge template.
pub fn extract_response(
    stream: &FeatureStream,
    challenge: &ChallengeSpec,
    cfg: &ExtractionConfig,
) -> Result<LocalizationResult, ExtractionError> {
    locate(stream, &CenteredTemplate::new(&challenge.template), cfg)
}

/// Same as [`extract_response`] with a prepared template.
pub fn locate(
    stream: &FeatureStream,
    template: &CenteredTemplate,
    cfg: &ExtractionConfig,
) -> Result<LocalizationResult, ExtractionError> {
    if stream.len() < template.len {
        return Err(ExtractionError::StreamTooShort {
            stream: stream.len(),
            template: template.len,
        });
    }
    if stream.dim() != template.dim {
        return Err(ExtractionError::DimensionMismatch {
            expected: template.dim,
            found: stream.dim(),
        });
    }
    let mut best_offset = 0;
    let mut best = f64::NEG_INFINITY;
    for offset in 0..=stream.len() - template.len {
        let score = template.correlate(&stream.frames, offset);
        if score > best {
            best = score;
            best_offset = offset;
        }
    }
    if let Some(floor) = cfg.min_correlation {
        if best < floor {
            return Err(ExtractionError::NoActivity { best, floor });
        }
    }
    Ok(LocalizationResult {
        segment: ResponseSegment {
            frames: stream.frames[best_offset..best_offset + template.len].to_vec(),
            source_offset: best_offset,
        },
        match_score: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::generate_template;
    use crate::types::{ChallengeCategory, Modality};

    fn challenge(len: usize, dim: usize) -> ChallengeSpec {
        ChallengeSpec::new(
            "probe",
            "probe",
            ChallengeCategory::Technology,
            Modality::Video,
            0.1,
            0.1,
            1.0,
            generate_template("probe", len, dim),
        )
        .unwrap()
    }

    fn embed(c: &ChallengeSpec, total: usize, at: usize) -> FeatureStream {
        let mut frames = vec![vec![0.0; c.template.dim()]; total];
        frames[at..at + c.template.len()].clone_from_slice(&c.template.frames);
        FeatureStream::new(frames, 25.0).unwrap()
    }

    #[test]
    fn finds_exact_copy() {
        let c = challenge(32, 16);
        let r = extract_response(&embed(&c, 80, 17), &c, &ExtractionConfig::default()).unwrap();
        assert_eq!(r.segment.source_offset, 17);
        assert!((r.match_score - 1.0).abs() < 1e-12, "{}", r.match_score);
        assert_eq!(r.segment.frames, c.template.frames);
    }

    #[test]
    fn short_stream_and_wrong_dimension() {
        let c = challenge(32, 16);
        let short = FeatureStream::new(vec![vec![0.0; 16]; 31], 25.0).unwrap();
        assert_eq!(
            extract_response(&short, &c, &ExtractionConfig::default()).unwrap_err(),
            ExtractionError::StreamTooShort { stream: 31, template: 32 }
        );
        let narrow = FeatureStream::new(vec![vec![0.0; 8]; 40], 25.0).unwrap();
        assert!(matches!(
            extract_response(&narrow, &c, &ExtractionConfig::default()),
            Err(ExtractionError::DimensionMismatch { expected: 16, found: 8 })
        ));
    }

    #[test]
    fn flat_stream_scores_zero_at_first_offset() {
        let c = challenge(32, 16);
        for level in [0.0, 0.3, -7.1] {
            let flat = FeatureStream::new(vec![vec![level; 16]; 50], 25.0).unwrap();
            let r = extract_response(&flat, &c, &ExtractionConfig::default()).unwrap();
            assert_eq!(r.segment.source_offset, 0);
            assert_eq!(r.match_score, 0.0);
        }
    }

    #[test]
    fn flat_template_scores_zero() {
        let mut c = challenge(8, 4);
        c.template = ActivityTemplate::new(vec![vec![2.7; 4]; 8]).unwrap();
        let noisy: Vec<Frame> = (0..20).map(|t| (0..4).map(|j| ((t * 7 + j) % 5) as f64).collect()).collect();
        let r = extract_response(&FeatureStream::new(noisy, 25.0).unwrap(), &c, &ExtractionConfig::default())
            .unwrap();
        assert_eq!((r.segment.source_offset, r.match_score), (0, 0.0));
    }

    #[test]
    fn floor_rejects_weak_matches() {
        let c = challenge(8, 4);
        let flat = FeatureStream::new(vec![vec![1.0; 4]; 20], 25.0).unwrap();
        let cfg = ExtractionConfig { min_correlation: Some(0.2) };
        assert!(matches!(
            extract_response(&flat, &c, &cfg),
            Err(ExtractionError::NoActivity { .. })
        ));
        assert!(extract_response(&embed(&c, 20, 3), &c, &cfg).is_ok());
    }

    #[test]
    fn shift_equivariance() {
        let c = challenge(16, 4);
        for k in 0..10 {
            let r = extract_response(&embed(&c, 40, 5 + k), &c, &ExtractionConfig::default()).unwrap();
            assert_eq!(r.segment.source_offset, 5 + k);
        }
    }
}
