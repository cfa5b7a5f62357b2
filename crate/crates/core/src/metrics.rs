//! Detection metrics over labeled scores.

use serde::{Deserialize, Serialize};

/// Area under the ROC curve by the Mann-Whitney rank statistic.
///
/// `positives` should score higher than `negatives`; ties count one half.
/// Returns 0.5 when either side is empty.
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    if positives.is_empty() || negatives.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of midranks (1-based) of the positives, kept doubled to stay integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let doubled_midrank = (i + 1 + j + 1) as u128;
        let pos_in_tie = all[i..=j].iter().filter(|(_, p)| *p).count() as u128;
        doubled_rank_sum += doubled_midrank * pos_in_tie;
        i = j + 1;
    }
    let (np, nn) = (positives.len() as u128, negatives.len() as u128);
    let doubled_u = doubled_rank_sum - np * (np + 1);
    (doubled_u as f64 / 2.0) / (np * nn) as f64
}

/// One operating point: scores strictly above `threshold` are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Operating points at every distinct score, from the lowest threshold up,
/// plus a leading point below every score where both rates are 1.
pub fn roc_points(positives: &[f64], negatives: &[f64]) -> Vec<RocPoint> {
    let mut thresholds: Vec<f64> = positives.iter().chain(negatives).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let above = |v: &[f64], t: f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&s| s > t).count() as f64 / v.len() as f64
        }
    };
    let first = thresholds.first().map_or(0.0, |&t| t - 1.0);
    std::iter::once(first)
        .chain(thresholds)
        .map(|t| RocPoint {
            threshold: t,
            tpr: above(positives, t),
            fpr: above(negatives, t),
        })
        .collect()
}

/// Fraction of `flags` that are true; 0 for an empty slice.
pub fn rate(flags: impl IntoIterator<Item = bool>) -> f64 {
    let (mut hits, mut n) = (0usize, 0usize);
    for f in flags {
        hits += usize::from(f);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Pooled two-proportion z statistic; 0 when the pooled rate is 0 or 1.
pub fn two_proportion_z(hits_a: usize, n_a: usize, hits_b: usize, n_b: usize) -> f64 {
    let (pa, pb) = (hits_a as f64 / n_a as f64, hits_b as f64 / n_b as f64);
    let pooled = (hits_a + hits_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (pa - pb) / se
    }
}

/// Fixed-width histogram of finite scores; larger values land in `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize, values: &[f64]) -> Self {
        let mut counts = vec![0; bins];
        let mut overflow = 0;
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if !(v.is_finite() && v <= hi) || width <= 0.0 {
                overflow += 1;
                continue;
            }
            let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram {
            lo,
            hi,
            counts,
            overflow,
        }
    }
}
