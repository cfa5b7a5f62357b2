//! Diagonal-covariance Mahalanobis baseline.

use serde::{Deserialize, Serialize};

use crate::error::DetectorError;
use crate::types::{Frame, ResponseSegment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatBaselineModel {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub epsilon: f64,
}

impl StatBaselineModel {
    /// Per-dimension mean and population variance over every frame.
    pub fn fit(frames: &[&Frame], epsilon: f64) -> Result<Self, DetectorError> {
        let d = frames.first().map(|f| f.len()).ok_or(DetectorError::EmptyCorpus)?;
        let n = frames.len() as f64;
        let mut mean = vec![0.0; d];
        for f in frames {
            for (m, x) in mean.iter_mut().zip(f.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; d];
        for f in frames {
            for ((v, m), x) in variance.iter_mut().zip(&mean).zip(f.iter()) {
                *v += (x - m) * (x - m);
            }
        }
        variance.iter_mut().for_each(|v| *v /= n);
        if let Some(i) = variance.iter().position(|v| !(v + epsilon > 0.0)) {
            return Err(DetectorError::DegenerateDimension(i));
        }
        Ok(StatBaselineModel {
            mean,
            variance,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn frame_distance(&self, frame: &[f64]) -> f64 {
        frame
            .iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((x, m), v)| (x - m) * (x - m) / (v + self.epsilon))
            .sum::<f64>()
            .sqrt()
    }

    /// Mean per-frame distance.
    pub fn score(&self, seg: &ResponseSegment) -> f64 {
        if seg.frames.is_empty() {
            return 0.0;
        }
        seg.frames.iter().map(|f| self.frame_distance(f)).sum::<f64>() / seg.frames.len() as f64
    }

    /// Standardizes a frame with this model's statistics.
    pub fn whiten(&self, frame: &[f64]) -> Frame {
        frame
            .iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((x, m), v)| (x - m) / (v + self.epsilon).sqrt())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_moments() {
        let frames = [vec![1.0, 0.0], vec![3.0, 0.0]];
        let refs: Vec<&Frame> = frames.iter().collect();
        let m = StatBaselineModel::fit(&refs, 0.0).unwrap_err();
        assert_eq!(m, DetectorError::DegenerateDimension(1));
        let m = StatBaselineModel::fit(&refs, 1e-6).unwrap();
        assert_eq!(m.mean, vec![2.0, 0.0]);
        assert_eq!(m.variance, vec![1.0, 0.0]);
    }

    #[test]
    fn distance_at_ten_sigma() {
        let m = StatBaselineModel {
            mean: vec![0.5; 16],
            variance: vec![4.0; 16],
            epsilon: 0.0,
        };
        let seg = ResponseSegment::new(vec![vec![0.5 + 10.0 * 2.0; 16]; 32], 0).unwrap();
        assert!((m.score(&seg) - 40.0).abs() < 1e-12);
        let at_mean = ResponseSegment::new(vec![vec![0.5; 16]; 32], 0).unwrap();
        assert_eq!(m.score(&at_mean), 0.0);
    }
}
