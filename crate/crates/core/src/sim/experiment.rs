//! Batches of episodes, detector training from simulated clean responses,
//! and the aggregate report.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::agents::{synthesize_response, Caller};
use super::channel::{apply_channel, quantize};
use super::episode::run_episode;
use super::{Scenario, ScenarioConfig, Truth, SHARED_MODEL_KEY};
use crate::catalog::Catalog;
use crate::detector::{train_detector, DetectorModel, TrainConfig};
use crate::error::SimError;
use crate::extraction::{locate, CenteredTemplate};
use crate::metrics::{auc, Histogram};
use crate::protocol::FinalDecision;
use crate::rng::{episode_seed, SeedStream};
use crate::types::{ChallengeSpec, Outcome, ResponseSegment, VerdictReason};

const HISTOGRAM_BINS: usize = 20;
const DRIFT_PROBES: usize = 200;

/// Clean responses to `challenge` as a detector would receive them: genuine
/// performances sent through the scenario's channel and extracted.
pub fn clean_corpus(
    challenge: &ChallengeSpec,
    cfg: &ScenarioConfig,
    n: usize,
    seed: &SeedStream,
) -> Vec<ResponseSegment> {
    let template = CenteredTemplate::new(&challenge.template);
    (0..n)
        .filter_map(|i| {
            let s = seed.index(i as u64);
            let raw = synthesize_response(
                Caller::Genuine(&cfg.genuine),
                challenge,
                cfg.session.frame_rate_hz,
                &mut s.derive("response").rng(),
            );
            let received = apply_channel(&raw, &cfg.channel, &mut s.derive("channel").rng());
            locate(&received, &template, &cfg.extraction).ok().map(|r| r.segment)
        })
        .collect()
}

/// Trains one model per challenge the call can receive, or a single shared
/// model under [`SHARED_MODEL_KEY`] when `shared` is set.
pub fn train_models(
    catalog: &Catalog,
    cfg: &ScenarioConfig,
    train: &TrainConfig,
    shared: bool,
) -> Result<BTreeMap<String, DetectorModel>, SimError> {
    cfg.validate(catalog)?;
    train.validate()?;
    let engine = cfg.engine(catalog.clone());
    let eligible = engine.eligible(&engine.initial_state());
    if eligible.is_empty() {
        return Err(SimError::ConfigInvalid("no challenge is eligible for this call".into()));
    }
    let corpus_root = SeedStream::root(train.seed).derive("corpus");
    let corpus_of = |c: &ChallengeSpec| clean_corpus(c, cfg, train.corpus_size, &corpus_root.derive(&c.id));
    if shared {
        let corpus: Vec<ResponseSegment> = eligible.par_iter().flat_map_iter(corpus_of).collect();
        let model = train_detector(&corpus, train)?;
        return Ok([(SHARED_MODEL_KEY.to_string(), model)].into());
    }
    eligible
        .par_iter()
        .map(|c| {
            let model = train_detector(&corpus_of(c), train)?.with_challenge(&c.id);
            Ok((c.id.clone(), model))
        })
        .collect()
}

/// One round of an episode as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub challenge: String,
    pub outcome: Outcome,
    pub score: f64,
    pub confidence: f64,
    pub reason: VerdictReason,
    pub offset: usize,
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub index: u64,
    pub truth: Truth,
    pub seed: u64,
    pub decision: Option<FinalDecision>,
    pub rounds: Vec<RoundRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EpisodeRecord {
    pub fn first_score(&self) -> Option<f64> {
        self.rounds.first().map(|r| r.score)
    }

    pub fn rejected(&self) -> bool {
        self.decision == Some(FinalDecision::Rejected)
    }
}

/// Aggregates recomputable from the episode log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub genuine_episodes: usize,
    pub deepfake_episodes: usize,
    pub failed_episodes: usize,
    /// Deepfake calls rejected.
    pub tpr: f64,
    /// Genuine calls rejected.
    pub fpr: f64,
    /// ROC area of first-round scores, deepfakes as positives.
    pub auc: f64,
    pub mean_rounds: f64,
    pub genuine_scores: Histogram,
    pub deepfake_scores: Histogram,
}

impl Metrics {
    pub fn from_records(records: &[EpisodeRecord]) -> Metrics {
        let ok: Vec<&EpisodeRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let class = |t: Truth| ok.iter().copied().filter(move |r| r.truth == t);
        let scores = |t: Truth| -> Vec<f64> { class(t).filter_map(|r| r.first_score()).collect() };
        let rejected_rate = |t: Truth| {
            let n = class(t).count();
            if n == 0 {
                0.0
            } else {
                class(t).filter(|r| r.rejected()).count() as f64 / n as f64
            }
        };
        let (gen, fake) = (scores(Truth::Genuine), scores(Truth::Deepfake));
        let hi = gen
            .iter()
            .chain(&fake)
            .copied()
            .filter(|s| *s < crate::types::UNSCORED)
            .fold(0.0, f64::max);
        let hi = if hi > 0.0 { hi } else { 1.0 };
        let total_rounds: usize = ok.iter().map(|r| r.rounds.len()).sum();
        Metrics {
            genuine_episodes: class(Truth::Genuine).count(),
            deepfake_episodes: class(Truth::Deepfake).count(),
            failed_episodes: records.len() - ok.len(),
            tpr: rejected_rate(Truth::Deepfake),
            fpr: rejected_rate(Truth::Genuine),
            auc: auc(&fake, &gen),
            mean_rounds: if ok.is_empty() { 0.0 } else { total_rounds as f64 / ok.len() as f64 },
            genuine_scores: Histogram::new(0.0, hi, HISTOGRAM_BINS, &gen),
            deepfake_scores: Histogram::new(0.0, hi, HISTOGRAM_BINS, &fake),
        }
    }
}

/// Score change caused by quantizing clean responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationDrift {
    pub challenge: String,
    pub quant_step: f64,
    pub probes: usize,
    /// Largest change of the combined score.
    pub max_score_change: f64,
    /// Largest change of the baseline score alone.
    pub max_baseline_change: f64,
    /// Analytic bound on the baseline change: `(q/2)·sqrt(Σ 1/(σ²+ε))`.
    pub baseline_bound: f64,
}

pub fn quantization_drift(
    challenge: &ChallengeSpec,
    model: &DetectorModel,
    cfg: &ScenarioConfig,
    quant_step: f64,
    seed: &SeedStream,
) -> QuantizationDrift {
    let clean_cfg = ScenarioConfig {
        channel: super::ChannelConfig::CLEAN,
        ..cfg.clone()
    };
    let probes = clean_corpus(challenge, &clean_cfg, DRIFT_PROBES, seed);
    let mut max_score_change: f64 = 0.0;
    let mut max_baseline_change: f64 = 0.0;
    for seg in &probes {
        let q = ResponseSegment {
            frames: seg
                .frames
                .iter()
                .map(|f| f.iter().map(|&v| quantize(v, quant_step)).collect())
                .collect(),
            source_offset: seg.source_offset,
        };
        let score = |s: &ResponseSegment| model.score_segment(s).expect("dimensions match");
        max_score_change = max_score_change.max((score(seg) - score(&q)).abs());
        max_baseline_change =
            max_baseline_change.max((model.baseline_score(seg) - model.baseline_score(&q)).abs());
    }
    let b = &model.baseline;
    let inv: f64 = b.variance.iter().map(|v| 1.0 / (v + b.epsilon)).sum();
    QuantizationDrift {
        challenge: challenge.id.clone(),
        quant_step,
        probes: probes.len(),
        max_score_change,
        max_baseline_change,
        baseline_bound: 0.5 * quant_step * inv.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_digest: String,
    pub base_seed: u64,
    pub episodes_per_class: usize,
    pub metrics: Metrics,
    pub quantization_drift: Vec<QuantizationDrift>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    /// Episode log ordered by class, then index.
    pub records: Vec<EpisodeRecord>,
}

fn record_of(scenario: &Scenario, truth: Truth, index: u64, seed: u64) -> EpisodeRecord {
    match run_episode(scenario, truth, seed) {
        Ok(o) => EpisodeRecord {
            index,
            truth,
            seed,
            decision: Some(o.decision),
            rounds: o
                .challenges
                .iter()
                .zip(&o.verdicts)
                .map(|(c, v)| RoundRecord {
                    challenge: c.clone(),
                    outcome: v.outcome,
                    score: v.anomaly_score,
                    confidence: v.confidence,
                    reason: v.reason,
                    offset: v.evidence.source_offset,
                })
                .collect(),
            error: None,
        },
        Err(e) => EpisodeRecord {
            index,
            truth,
            seed,
            decision: None,
            rounds: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Digest of everything that determines an experiment's output.
pub fn config_digest(scenario: &Scenario, n_episodes: usize, base_seed: u64) -> String {
    let models: BTreeMap<&String, String> = scenario
        .models
        .iter()
        .map(|(k, m)| (k, hex(&Sha256::digest(m.to_json().as_bytes()))))
        .collect();
    let doc = serde_json::json!({
        "scenario": scenario.config,
        "catalog": scenario.catalog(),
        "models": models,
        "n_episodes": n_episodes,
        "base_seed": base_seed,
    });
    hex(&Sha256::digest(doc.to_string().as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `n_episodes` calls per truth class. Episode `i` uses seed
/// `base_seed ^ i`, split further by class label. Episodes run on the current
/// rayon pool; results do not depend on its size.
pub fn run_experiment(
    scenario: &Scenario,
    n_episodes: usize,
    base_seed: u64,
) -> Result<ExperimentRun, SimError> {
    if n_episodes == 0 {
        return Err(SimError::ConfigInvalid("n_episodes must be at least 1".into()));
    }
    let jobs: Vec<(Truth, u64)> = [Truth::Genuine, Truth::Deepfake]
        .into_iter()
        .flat_map(|t| (0..n_episodes as u64).map(move |i| (t, i)))
        .collect();
    let records: Vec<EpisodeRecord> = jobs
        .par_iter()
        .map(|&(t, i)| record_of(scenario, t, i, episode_seed(base_seed, i)))
        .collect();

    let q = if scenario.channel.quant_step > 0.0 { scenario.channel.quant_step } else { 0.1 };
    let drift_root = SeedStream::root(base_seed).derive("drift");
    let mut drift_targets: Vec<(&ChallengeSpec, &DetectorModel)> = Vec::new();
    for c in scenario.catalog().iter() {
        if let Ok((_, model)) = scenario.detector_for(&c.id) {
            drift_targets.push((c, model));
        }
    }
    let quantization_drift = drift_targets
        .par_iter()
        .map(|(c, m)| quantization_drift(c, m, &scenario.config, q, &drift_root.derive(&c.id)))
        .collect();

    Ok(ExperimentRun {
        report: ExperimentReport {
            config_digest: config_digest(scenario, n_episodes, base_seed),
            base_seed,
            episodes_per_class: n_episodes,
            metrics: Metrics::from_records(&records),
            quantization_drift,
        },
        records,
    })
}
