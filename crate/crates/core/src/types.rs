//! Shared domain model.
//!
//! Values here are plain data with validating constructors. Fields stay
//! public so that configs and wire messages can be built directly; code that
//! accepts untrusted input goes through the constructors or
//! [`crate::catalog::validate_catalog`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::InvalidValue;

/// One feature vector.
pub type Frame = Vec<f64>;

/// Which media channels a call (or a challenge) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Video,
    AudioVideo,
}

impl Modality {
    fn has_audio(self) -> bool {
        matches!(self, Modality::Audio | Modality::AudioVideo)
    }

    fn has_video(self) -> bool {
        matches!(self, Modality::Video | Modality::AudioVideo)
    }

    /// Whether a call of modality `self` can carry a challenge needing `required`.
    pub fn satisfies(self, required: Modality) -> bool {
        (!required.has_audio() || self.has_audio()) && (!required.has_video() || self.has_video())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeCategory {
    /// Activities current generators cannot render: physics, occlusion, objects.
    Technology,
    /// Content unlikely to appear in the attacker's data on the victim.
    OutOfDistribution,
    /// Voice challenges.
    AudioChallenge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallerStatus {
    Indoors,
    Outdoors,
    Seated,
    Standing,
    Unknown,
}

/// The feature trajectory a correct response is expected to follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivityTemplate {
    pub frames: Vec<Frame>,
}

impl ActivityTemplate {
    pub fn new(frames: Vec<Frame>) -> Result<Self, InvalidValue> {
        if frames.len() < 2 {
            return Err(InvalidValue::new("template", "needs at least 2 frames"));
        }
        uniform_dim(&frames, "template")?;
        Ok(ActivityTemplate { frames })
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// One challenge of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChallengeSpec {
    pub id: String,
    pub name: String,
    pub category: ChallengeCategory,
    pub modality: Modality,
    /// Effort asked of the caller, in [0, 1].
    pub burden: f64,
    /// Prior probability that a generic attacker renders this challenge cleanly.
    pub coverage_prior: f64,
    /// Seconds allotted for the response.
    pub response_window_s: f64,
    pub template: ActivityTemplate,
    /// Caller statuses under which the challenge is not asked.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_status: Vec<CallerStatus>,
}

impl ChallengeSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        category: ChallengeCategory,
        modality: Modality,
        burden: f64,
        coverage_prior: f64,
        response_window_s: f64,
        template: ActivityTemplate,
    ) -> Result<Self, InvalidValue> {
        let spec = ChallengeSpec {
            id: id.into(),
            name: name.into(),
            category,
            modality,
            burden,
            coverage_prior,
            response_window_s,
            template,
            excluded_status: Vec::new(),
        };
        spec.check()?;
        Ok(spec)
    }

    /// Checks every field invariant of a single entry.
    pub fn check(&self) -> Result<(), InvalidValue> {
        if !is_kebab_id(&self.id) {
            return Err(InvalidValue::new("id", format!("`{}` is not lowercase kebab-case", self.id)));
        }
        unit_interval(self.burden, "burden")?;
        unit_interval(self.coverage_prior, "coverage_prior")?;
        if !(self.response_window_s > 0.0 && self.response_window_s.is_finite()) {
            return Err(InvalidValue::new(
                "response_window_s",
                format!("{} is not a positive duration", self.response_window_s),
            ));
        }
        if self.template.len() < 2 {
            return Err(InvalidValue::new("template", "needs at least 2 frames"));
        }
        if self.template.dim() == 0 {
            return Err(InvalidValue::new("template", "frames have dimension 0"));
        }
        uniform_dim(&self.template.frames, "template")?;
        Ok(())
    }
}

fn is_kebab_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('-')
        && !id.ends_with('-')
        && !id.contains("--")
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

fn unit_interval(v: f64, field: &'static str) -> Result<(), InvalidValue> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(InvalidValue::new(field, format!("{v} is outside [0, 1]")))
    }
}

fn uniform_dim(frames: &[Frame], field: &'static str) -> Result<usize, InvalidValue> {
    let d = frames.first().map_or(0, Vec::len);
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != d) {
        return Err(InvalidValue::new(
            field,
            format!("frame {i} has dimension {}, expected {d}", f.len()),
        ));
    }
    if let Some(v) = frames.iter().flatten().find(|v| !v.is_finite()) {
        return Err(InvalidValue::new(field, format!("non-finite value {v}")));
    }
    Ok(d)
}

/// The trigger signals of a call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuspicionIndicators {
    pub new_unverified_caller: bool,
    pub malicious_network_history: bool,
    pub identity_masked: bool,
    /// 1 means fully live.
    pub liveness: f64,
    pub manual_request: bool,
}

impl SuspicionIndicators {
    /// Builds indicators, clamping `liveness` into [0, 1].
    pub fn new(
        new_unverified_caller: bool,
        malicious_network_history: bool,
        identity_masked: bool,
        liveness: f64,
        manual_request: bool,
    ) -> Self {
        let liveness = if liveness.is_nan() { 0.0 } else { liveness.clamp(0.0, 1.0) };
        SuspicionIndicators {
            new_unverified_caller,
            malicious_network_history,
            identity_masked,
            liveness,
            manual_request,
        }
    }

    /// A verified, live caller with no flags raised.
    pub fn benign() -> Self {
        Self::new(false, false, false, 1.0, false)
    }
}

impl Default for SuspicionIndicators {
    fn default() -> Self {
        Self::benign()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallContext {
    pub modality: Modality,
    /// Channel quality estimate, 1 = pristine.
    pub quality: f64,
    pub caller_status: CallerStatus,
    pub indicators: SuspicionIndicators,
}

impl CallContext {
    pub fn new(
        modality: Modality,
        quality: f64,
        caller_status: CallerStatus,
        indicators: SuspicionIndicators,
    ) -> Result<Self, InvalidValue> {
        unit_interval(quality, "quality")?;
        Ok(CallContext {
            modality,
            quality,
            caller_status,
            indicators: SuspicionIndicators::new(
                indicators.new_unverified_caller,
                indicators.malicious_network_history,
                indicators.identity_masked,
                indicators.liveness,
                indicators.manual_request,
            ),
        })
    }
}

/// Time-indexed feature vectors captured from a call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureStream {
    pub frames: Vec<Frame>,
    pub frame_rate_hz: f64,
}

impl FeatureStream {
    pub fn new(frames: Vec<Frame>, frame_rate_hz: f64) -> Result<Self, InvalidValue> {
        if !(frame_rate_hz > 0.0 && frame_rate_hz.is_finite()) {
            return Err(InvalidValue::new("frame_rate_hz", format!("{frame_rate_hz} is not positive")));
        }
        uniform_dim(&frames, "frames")?;
        Ok(FeatureStream {
            frames,
            frame_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate_hz
    }
}

/// The span of a stream that holds the performed challenge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSegment {
    pub frames: Vec<Frame>,
    /// Index of the first frame in the parent stream.
    pub source_offset: usize,
}

impl ResponseSegment {
    pub fn new(frames: Vec<Frame>, source_offset: usize) -> Result<Self, InvalidValue> {
        if frames.is_empty() {
            return Err(InvalidValue::new("frames", "segment is empty"));
        }
        uniform_dim(&frames, "frames")?;
        Ok(ResponseSegment {
            frames,
            source_offset,
        })
    }

    /// Marker used as evidence when nothing was captured.
    pub fn empty() -> Self {
        ResponseSegment {
            frames: Vec::new(),
            source_offset: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    Scored,
    Timeout,
    ExtractionFailed,
}

impl fmt::Display for VerdictReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictReason::Scored => "scored",
            VerdictReason::Timeout => "timeout",
            VerdictReason::ExtractionFailed => "extraction_failed",
        })
    }
}

/// Anomaly score recorded for verdicts that were never scored. It ranks above
/// every real score and survives a JSON round trip exactly.
pub const UNSCORED: f64 = f64::MAX;

/// Result of one challenge round, shown to the user with its evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub outcome: Outcome,
    pub anomaly_score: f64,
    pub confidence: f64,
    pub evidence: ResponseSegment,
    pub reason: VerdictReason,
}

impl Verdict {
    pub fn new(
        outcome: Outcome,
        anomaly_score: f64,
        confidence: f64,
        evidence: ResponseSegment,
        reason: VerdictReason,
    ) -> Result<Self, InvalidValue> {
        if anomaly_score.is_nan() || anomaly_score < 0.0 {
            return Err(InvalidValue::new("anomaly_score", format!("{anomaly_score} is negative")));
        }
        unit_interval(confidence, "confidence")?;
        if reason != VerdictReason::Scored && outcome != Outcome::Fail {
            return Err(InvalidValue::new("outcome", format!("a {reason} verdict must fail")));
        }
        Ok(Verdict {
            outcome,
            anomaly_score,
            confidence,
            evidence,
            reason,
        })
    }

    /// The verdict for a caller who never completed the response in time.
    pub fn timeout() -> Self {
        Verdict {
            outcome: Outcome::Fail,
            anomaly_score: UNSCORED,
            confidence: 1.0,
            evidence: ResponseSegment::empty(),
            reason: VerdictReason::Timeout,
        }
    }

    /// The verdict for a capture in which no response could be located.
    pub fn extraction_failed() -> Self {
        Verdict {
            reason: VerdictReason::ExtractionFailed,
            ..Self::timeout()
        }
    }
}
