//! Call simulator: genuine and deepfake callers answer challenges through a
//! lossy channel while full protocol sessions run against trained detectors.
//!
//! All randomness comes from labeled [`SeedStream`](crate::rng::SeedStream)s,
//! so every episode, corpus and report is reproducible from its seed alone
//! and independent of how many threads run the episodes.

pub mod agents;
pub mod channel;
pub mod episode;
pub mod experiment;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use agents::{synthesize_response, Caller, DeepfakeAgentConfig, GenuineAgentConfig};
pub use channel::{apply_channel, quantize, ChannelConfig};
pub use episode::{run_episode, EpisodeOutcome, UserPolicy};
pub use experiment::{
    clean_corpus, run_experiment, train_models, EpisodeRecord, ExperimentReport, ExperimentRun,
    Metrics,
};

use crate::catalog::Catalog;
use crate::detector::DetectorModel;
use crate::error::SimError;
use crate::extraction::{CenteredTemplate, ExtractionConfig};
use crate::protocol::{ProtocolEngine, SessionConfig};
use crate::selector::{SelectionPolicy, SelectionStrategy};
use crate::suspicion::SuspicionConfig;
use crate::types::{CallContext, CallerStatus, Modality, SuspicionIndicators};

/// Key of a model shared by every challenge.
pub const SHARED_MODEL_KEY: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Genuine,
    Deepfake,
}

impl Truth {
    pub fn label(self) -> &'static str {
        match self {
            Truth::Genuine => "genuine",
            Truth::Deepfake => "deepfake",
        }
    }
}

/// Everything about a simulated call except the catalog and the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub context: CallContext,
    pub suspicion: SuspicionConfig,
    pub selection: SelectionPolicy,
    pub strategy: SelectionStrategy,
    pub session: SessionConfig,
    pub genuine: GenuineAgentConfig,
    pub deepfake: DeepfakeAgentConfig,
    pub channel: ChannelConfig,
    pub extraction: ExtractionConfig,
    pub user: UserPolicy,
    /// Frames per stream chunk message during capture.
    pub chunk_frames: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            context: CallContext {
                modality: Modality::Video,
                quality: 0.9,
                caller_status: CallerStatus::Seated,
                indicators: SuspicionIndicators::new(true, false, true, 1.0, false),
            },
            suspicion: SuspicionConfig::default(),
            selection: SelectionPolicy::default(),
            strategy: SelectionStrategy::Utility,
            session: SessionConfig::default(),
            genuine: GenuineAgentConfig::default(),
            deepfake: DeepfakeAgentConfig::default(),
            channel: ChannelConfig::MILD,
            extraction: ExtractionConfig::default(),
            user: UserPolicy::default(),
            chunk_frames: 8,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, catalog: &Catalog) -> Result<(), SimError> {
        let invalid = |e: crate::error::InvalidValue| SimError::ConfigInvalid(e.to_string());
        CallContext::new(
            self.context.modality,
            self.context.quality,
            self.context.caller_status,
            self.context.indicators,
        )
        .map_err(invalid)?;
        self.suspicion.validate().map_err(invalid)?;
        self.selection.validate().map_err(invalid)?;
        self.genuine.validate().map_err(invalid)?;
        self.channel.validate().map_err(invalid)?;
        let dim = catalog.iter().map(|c| c.template.dim()).max().unwrap_or(0);
        self.deepfake.validate(dim).map_err(invalid)?;
        if !(self.session.frame_rate_hz > 0.0) || !(self.session.grace_s >= 0.0) {
            return Err(SimError::ConfigInvalid("session timing must be positive".into()));
        }
        if self.chunk_frames == 0 {
            return Err(SimError::ConfigInvalid("chunk_frames must be at least 1".into()));
        }
        Ok(())
    }

    pub fn engine(&self, catalog: Catalog) -> ProtocolEngine {
        ProtocolEngine {
            catalog,
            context: self.context,
            suspicion: self.suspicion,
            policy: self.selection.clone(),
            strategy: self.strategy,
            selection_seed: crate::rng::SeedStream::root(0),
            session: self.session.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedDetector {
    pub template: CenteredTemplate,
    pub model: Arc<DetectorModel>,
}

/// A validated scenario with its catalog and trained detectors.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub engine: ProtocolEngine,
    pub genuine: GenuineAgentConfig,
    pub deepfake: DeepfakeAgentConfig,
    pub channel: ChannelConfig,
    pub extraction: ExtractionConfig,
    pub user: UserPolicy,
    pub chunk_frames: usize,
    pub models: BTreeMap<String, Arc<DetectorModel>>,
    detectors: BTreeMap<String, PreparedDetector>,
}

impl Scenario {
    /// Checks the config and that every challenge the call can receive has a
    /// model, either its own or one stored under [`SHARED_MODEL_KEY`].
    pub fn new(
        config: ScenarioConfig,
        catalog: Catalog,
        models: BTreeMap<String, DetectorModel>,
    ) -> Result<Self, SimError> {
        config.validate(&catalog)?;
        let models: BTreeMap<String, Arc<DetectorModel>> =
            models.into_iter().map(|(k, m)| (k, Arc::new(m))).collect();
        let engine = config.engine(catalog);
        let mut detectors = BTreeMap::new();
        for c in engine.eligible(&engine.initial_state()) {
            let model = models
                .get(&c.id)
                .or_else(|| models.get(SHARED_MODEL_KEY))
                .ok_or_else(|| SimError::MissingModel(c.id.clone()))?;
            if model.dim() != c.template.dim() {
                return Err(SimError::ConfigInvalid(format!(
                    "model for `{}` has dimension {}, template has {}",
                    c.id,
                    model.dim(),
                    c.template.dim()
                )));
            }
            detectors.insert(
                c.id.clone(),
                PreparedDetector {
                    template: CenteredTemplate::new(&c.template),
                    model: Arc::clone(model),
                },
            );
        }
        if detectors.is_empty() {
            return Err(SimError::ConfigInvalid("no challenge is eligible for this call".into()));
        }
        Ok(Scenario {
            genuine: config.genuine.clone(),
            deepfake: config.deepfake.clone(),
            channel: config.channel,
            extraction: config.extraction,
            user: config.user,
            chunk_frames: config.chunk_frames,
            config,
            engine,
            models,
            detectors,
        })
    }

    pub fn detector_for(&self, id: &str) -> Result<(&CenteredTemplate, &DetectorModel), SimError> {
        self.detectors
            .get(id)
            .map(|d| (&d.template, d.model.as_ref()))
            .ok_or_else(|| SimError::MissingModel(id.to_string()))
    }

    pub fn catalog(&self) -> &Catalog {
        &self.engine.catalog
    }
}
