//! One-class scoring of extracted responses.
//!
//! A [`DetectorModel`] is trained only on clean responses to one challenge.
//! It pairs a diagonal Mahalanobis baseline with an autoencoder ensemble,
//! calibrates a threshold at a percentile of its own training scores, and
//! turns scores into [`Verdict`]s whose confidence is the score's position in
//! that calibration list.

pub mod baseline;
pub mod ensemble;

use serde::{Deserialize, Serialize};

pub use baseline::StatBaselineModel;
pub use ensemble::{Autoencoder, AutoencoderEnsembleModel};

use crate::error::DetectorError;
use crate::rng::SeedStream;
use crate::types::{Frame, Outcome, ResponseSegment, Verdict, VerdictReason};

pub const MODEL_VERSION: u32 = 1;

/// How the two scores are merged into one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    EnsembleOnly,
    BaselineOnly,
    #[default]
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Number of autoencoder groups.
    pub groups: usize,
    /// Calibration percentile in (0, 100].
    pub percentile: f64,
    pub epsilon: f64,
    pub combine: Combine,
    /// Clean responses generated per challenge when training from simulation.
    pub corpus_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
            groups: 4,
            percentile: 99.0,
            epsilon: 1e-6,
            combine: Combine::Max,
            corpus_size: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return bad("percentile must be in (0, 100]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.groups == 0 {
            return bad("batch_size and groups must be at least 1");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub version: u32,
    /// Challenge the model was trained for; `None` for a shared model.
    pub challenge_id: Option<String>,
    pub config: TrainConfig,
    pub baseline: StatBaselineModel,
    pub ensemble: AutoencoderEnsembleModel,
    /// Training-segment scores, ascending.
    pub calibration: Vec<f64>,
    pub threshold: f64,
    pub combine: Combine,
    /// Ensemble corpus loss before training and after each epoch.
    pub training_loss: Vec<f64>,
}

/// Nearest-rank percentile of an ascending list.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty list");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Fraction of `sorted` strictly below `score`.
pub fn fraction_below(sorted: &[f64], score: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    sorted.partition_point(|&c| c < score) as f64 / sorted.len() as f64
}

pub fn train_detector(
    clean: &[ResponseSegment],
    cfg: &TrainConfig,
) -> Result<DetectorModel, DetectorError> {
    cfg.validate()?;
    let first = clean.iter().find(|s| !s.is_empty()).ok_or(DetectorError::EmptyCorpus)?;
    let dim = first.dim();
    if let Some(bad) = clean.iter().find(|s| s.is_empty() || s.dim() != dim) {
        return Err(DetectorError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    let all: Vec<&Frame> = clean.iter().flat_map(|s| s.frames.iter()).collect();
    let baseline = StatBaselineModel::fit(&all, cfg.epsilon)?;

    let seed = SeedStream::root(cfg.seed);
    let whitened: Vec<Vec<Frame>> = clean
        .iter()
        .map(|s| s.frames.iter().map(|f| baseline.whiten(f)).collect())
        .collect();
    let flat: Vec<Frame> = whitened.iter().flatten().cloned().collect();
    let mut ensemble = AutoencoderEnsembleModel::untrained(dim, cfg.groups, &seed);
    let training_loss = ensemble.train(
        &flat,
        ensemble::Schedule {
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
        },
        &seed,
    );
    ensemble.fit_normalizers(&whitened);

    let mut model = DetectorModel {
        version: MODEL_VERSION,
        challenge_id: None,
        config: cfg.clone(),
        baseline,
        ensemble,
        calibration: Vec::new(),
        threshold: 0.0,
        combine: cfg.combine,
        training_loss,
    };
    let mut calibration: Vec<f64> = clean.iter().map(|s| model.score_unchecked(s)).collect();
    calibration.sort_by(f64::total_cmp);
    model.threshold = percentile(&calibration, cfg.percentile);
    model.calibration = calibration;
    Ok(model)
}

impl DetectorModel {
    pub fn dim(&self) -> usize {
        self.baseline.dim()
    }

    pub fn with_challenge(mut self, id: impl Into<String>) -> Self {
        self.challenge_id = Some(id.into());
        self
    }

    pub fn baseline_score(&self, seg: &ResponseSegment) -> f64 {
        self.baseline.score(seg)
    }

    pub fn ensemble_score(&self, seg: &ResponseSegment) -> f64 {
        let whitened: Vec<Frame> = seg.frames.iter().map(|f| self.baseline.whiten(f)).collect();
        self.ensemble.score_whitened(&whitened)
    }

    fn score_unchecked(&self, seg: &ResponseSegment) -> f64 {
        match self.combine {
            Combine::BaselineOnly => self.baseline_score(seg),
            Combine::EnsembleOnly => self.ensemble_score(seg),
            Combine::Max => self.baseline_score(seg).max(self.ensemble_score(seg)),
        }
    }

    pub fn score_segment(&self, seg: &ResponseSegment) -> Result<f64, DetectorError> {
        if seg.is_empty() || seg.frames.iter().any(|f| f.len() != self.dim()) {
            return Err(DetectorError::DimensionMismatch {
                expected: self.dim(),
                found: seg.frames.iter().map(Vec::len).find(|&l| l != self.dim()).unwrap_or(0),
            });
        }
        Ok(self.score_unchecked(seg))
    }

    /// Pass/fail at the calibrated threshold, with empirical-CDF confidence.
    pub fn decide(&self, seg: &ResponseSegment) -> Result<Verdict, DetectorError> {
        let score = self.score_segment(seg)?;
        Ok(self.verdict_for(score, seg.clone()))
    }

    pub fn verdict_for(&self, score: f64, evidence: ResponseSegment) -> Verdict {
        let below = fraction_below(&self.calibration, score);
        let (outcome, confidence) = if score > self.threshold {
            (Outcome::Fail, below)
        } else {
            (Outcome::Pass, 1.0 - below)
        };
        Verdict {
            outcome,
            anomaly_score: score,
            confidence,
            evidence,
            reason: VerdictReason::Scored,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let model: DetectorModel = serde_json::from_str(text)
            .map_err(|e| DetectorError::InvalidConfig(format!("model file: {e}")))?;
        if model.version != MODEL_VERSION {
            return Err(DetectorError::UnsupportedVersion(model.version));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&v, 100.0), 100.0);
        assert_eq!(percentile(&v, 0.5), 1.0);
        assert_eq!(percentile(&[3.0], 99.0), 3.0);
    }

    fn calibrated(calibration: Vec<f64>) -> DetectorModel {
        let seg = ResponseSegment::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 0).unwrap();
        let mut m = train_detector(&[seg], &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        m.threshold = percentile(&calibration, 99.0);
        m.calibration = calibration;
        m
    }

    #[test]
    fn confidence_endpoints_and_median() {
        let m = calibrated((1..=10).map(f64::from).collect());
        let ev = ResponseSegment::empty();
        let v = m.verdict_for(1.0, ev.clone());
        assert_eq!((v.outcome, v.confidence), (Outcome::Pass, 1.0));
        let v = m.verdict_for(11.0, ev.clone());
        assert_eq!((v.outcome, v.confidence), (Outcome::Fail, 1.0));
        let v = m.verdict_for(5.5, ev.clone());
        assert_eq!((v.outcome, v.confidence), (Outcome::Pass, 0.5));
        // Threshold itself passes: fail only strictly above.
        assert_eq!(m.verdict_for(10.0, ev).outcome, Outcome::Pass);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(train_detector(&[], &TrainConfig::default()).unwrap_err(), DetectorError::EmptyCorpus);
        let a = ResponseSegment::new(vec![vec![0.0; 3]; 4], 0).unwrap();
        let b = ResponseSegment::new(vec![vec![0.0; 2]; 4], 0).unwrap();
        assert!(matches!(
            train_detector(&[a.clone(), b.clone()], &TrainConfig::default()),
            Err(DetectorError::DimensionMismatch { .. })
        ));
        let m = train_detector(&[a], &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        assert!(matches!(m.score_segment(&b), Err(DetectorError::DimensionMismatch { expected: 3, found: 2 })));
        assert!(m.score_segment(&ResponseSegment::empty()).is_err());
        let bad = TrainConfig { percentile: 0.0, ..Default::default() };
        assert!(matches!(train_detector(&[b], &bad), Err(DetectorError::InvalidConfig(_))));
    }

    #[test]
    fn identical_corpus_trains_without_division_by_zero() {
        let seg = ResponseSegment::new(vec![vec![0.25; 16]; 32], 0).unwrap();
        let corpus = vec![seg.clone(); 20];
        let m = train_detector(&corpus, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
        assert!(m.baseline.variance.iter().all(|&v| v == 0.0));
        assert_eq!(m.score_segment(&seg).unwrap(), m.threshold);
        let mut off = seg.clone();
        off.frames[0][0] += 0.01;
        let s = m.score_segment(&off).unwrap();
        assert!(s.is_finite() && s > m.threshold);

        let strict = TrainConfig { epsilon: 0.0, ..Default::default() };
        assert_eq!(train_detector(&corpus, &strict).unwrap_err(), DetectorError::DegenerateDimension(0));
    }
}
