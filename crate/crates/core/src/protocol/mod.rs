//! Session state machine for one screened call.
//!
//! ```text
//! Idle --Trigger(s ≥ θ)--> Triggered --ChallengeSent--> ChallengeIssued
//!   --CaptureStarted--> Capturing --CaptureEnded--> Evaluating --Scored--> Decided
//! ChallengeIssued/Capturing --Tick(now > deadline)--> Decided (timeout)
//! Decided --Rechallenge--> Triggered     Decided --Proceed/Terminate--> Closed
//! ```
//!
//! [`ProtocolEngine::advance`] is pure: time only enters through event
//! timestamps and `Tick`s, so a session replays identically.

pub mod wire;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::ProtocolError;
use crate::rng::SeedStream;
use crate::selector::{
    filter_eligible, select_challenge, select_uniform, SelectionPolicy, SelectionStrategy,
};
use crate::suspicion::{should_trigger, SuspicionConfig};
use crate::types::{CallContext, ChallengeSpec, FeatureStream, Frame, Verdict};
use crate::DEFAULT_FRAME_RATE_HZ;

pub use wire::{decode_message, encode_message, Message};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Triggered,
    ChallengeIssued,
    Capturing,
    Evaluating,
    Decided,
    /// Terminal; the session emitted `CloseSession`.
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserDecision {
    Proceed,
    Rechallenge,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalDecision {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    Trigger { score: f64 },
    #[serde(rename = "challenge")]
    ChallengeSent { id: String },
    #[serde(rename = "capture_start")]
    CaptureStarted,
    #[serde(rename = "chunk")]
    StreamChunk { frames: Vec<Frame> },
    #[serde(rename = "capture_end")]
    CaptureEnded,
    Scored { verdict: Verdict },
    #[serde(rename = "decision")]
    UserDecision { decision: UserDecision },
    Tick { now: f64 },
}

impl Event {
    /// The wire tag, also used in diagnostics.
    pub fn tag(&self) -> &'static str {
        match self {
            Event::Trigger { .. } => "trigger",
            Event::ChallengeSent { .. } => "challenge",
            Event::CaptureStarted => "capture_start",
            Event::StreamChunk { .. } => "chunk",
            Event::CaptureEnded => "capture_end",
            Event::Scored { .. } => "scored",
            Event::UserDecision { .. } => "decision",
            Event::Tick { .. } => "tick",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    #[serde(rename = "issue")]
    IssueChallenge { challenge: ChallengeSpec },
    BeginCapture { window_s: f64 },
    RunDetector { challenge_id: String, stream: FeatureStream },
    #[serde(rename = "notify")]
    NotifyUser { verdict: Verdict },
    #[serde(rename = "close")]
    CloseSession { decision: FinalDecision },
}

impl Action {
    pub fn tag(&self) -> &'static str {
        match self {
            Action::IssueChallenge { .. } => "issue",
            Action::BeginCapture { .. } => "begin_capture",
            Action::RunDetector { .. } => "run_detector",
            Action::NotifyUser { .. } => "notify",
            Action::CloseSession { .. } => "close",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssuedChallenge {
    pub id: String,
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    pub issued: Vec<IssuedChallenge>,
    pub verdicts: Vec<Verdict>,
    /// Seconds since session start; set exactly while a response is awaited.
    pub deadline: Option<f64>,
    pub rechallenge_budget: u32,
    /// Suspicion score that opened the session.
    pub suspicion: f64,
    /// Frames received during the current capture.
    pub capture: Vec<Frame>,
    pub decision: Option<FinalDecision>,
}

impl SessionState {
    pub fn new(rechallenge_budget: u32) -> Self {
        SessionState {
            phase: Phase::Idle,
            issued: Vec::new(),
            verdicts: Vec::new(),
            deadline: None,
            rechallenge_budget,
            suspicion: 0.0,
            capture: Vec::new(),
            decision: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.phase == Phase::Closed
    }

    pub fn used_ids(&self) -> BTreeSet<String> {
        self.issued.iter().map(|c| c.id.clone()).collect()
    }

    pub fn current_challenge(&self) -> Option<&str> {
        self.issued.last().map(|c| c.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    /// Extra seconds allowed beyond the challenge's response window.
    pub grace_s: f64,
    pub rechallenge_budget: u32,
    pub frame_rate_hz: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            grace_s: 2.0,
            rechallenge_budget: 2,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        }
    }
}

/// Everything a session's transitions depend on besides its state.
#[derive(Debug, Clone)]
pub struct ProtocolEngine {
    pub catalog: Catalog,
    pub context: CallContext,
    pub suspicion: SuspicionConfig,
    pub policy: SelectionPolicy,
    pub strategy: SelectionStrategy,
    /// Seeds uniform-random selection; unused by utility selection.
    pub selection_seed: SeedStream,
    pub session: SessionConfig,
}

pub type Transition = (SessionState, Vec<Action>);

impl ProtocolEngine {
    pub fn new(catalog: Catalog, context: CallContext) -> Self {
        ProtocolEngine {
            catalog,
            context,
            suspicion: SuspicionConfig::default(),
            policy: SelectionPolicy::default(),
            strategy: SelectionStrategy::Utility,
            selection_seed: SeedStream::root(0),
            session: SessionConfig::default(),
        }
    }

    pub fn initial_state(&self) -> SessionState {
        SessionState::new(self.session.rechallenge_budget)
    }

    /// Challenges still available to this session.
    pub fn eligible(&self, state: &SessionState) -> Vec<ChallengeSpec> {
        filter_eligible(&self.catalog, &self.context, &state.used_ids(), &self.policy)
    }

    fn next_challenge(&self, state: &SessionState) -> Result<ChallengeSpec, ProtocolError> {
        let eligible = self.eligible(state);
        let picked = match self.strategy {
            SelectionStrategy::Utility => select_challenge(&eligible, state.suspicion, &self.policy)?,
            SelectionStrategy::UniformRandom => {
                let mut rng = self.selection_seed.index(state.issued.len() as u64).rng();
                select_uniform(&eligible, &mut rng)?
            }
        };
        Ok(picked.clone())
    }

    fn issue(&self, mut next: SessionState, now: f64) -> Result<Transition, ProtocolError> {
        let challenge = self.next_challenge(&next)?;
        next.phase = Phase::Triggered;
        next.issued.push(IssuedChallenge {
            id: challenge.id.clone(),
            issued_at: now,
        });
        Ok((next, vec![Action::IssueChallenge { challenge }]))
    }

    fn window_of(&self, state: &SessionState) -> f64 {
        state
            .current_challenge()
            .and_then(|id| self.catalog.get(id))
            .map_or(0.0, |c| c.response_window_s)
    }

    pub fn advance(
        &self,
        state: &SessionState,
        event: &Event,
        now: f64,
    ) -> Result<Transition, ProtocolError> {
        let illegal = || ProtocolError::IllegalTransition {
            phase: state.phase,
            event: event.tag(),
        };
        let mut next = state.clone();
        match (state.phase, event) {
            (_, Event::Tick { now: t }) => {
                let expired = matches!(state.phase, Phase::ChallengeIssued | Phase::Capturing)
                    && state.deadline.is_some_and(|d| *t > d);
                if !expired {
                    return Ok((next, Vec::new()));
                }
                let verdict = Verdict::timeout();
                next.phase = Phase::Decided;
                next.deadline = None;
                next.capture.clear();
                next.verdicts.push(verdict.clone());
                Ok((next, vec![Action::NotifyUser { verdict }]))
            }
            (Phase::Idle, Event::Trigger { score }) => {
                if !should_trigger(*score, &self.suspicion) {
                    return Ok((next, Vec::new()));
                }
                next.suspicion = *score;
                self.issue(next, now)
            }
            (Phase::Triggered, Event::ChallengeSent { id }) => {
                let expected = state.current_challenge().unwrap_or_default();
                if id != expected {
                    return Err(ProtocolError::ChallengeMismatch {
                        expected: expected.to_string(),
                        got: id.clone(),
                    });
                }
                next.phase = Phase::ChallengeIssued;
                next.deadline = Some(now + self.window_of(state) + self.session.grace_s);
                Ok((next, Vec::new()))
            }
            (Phase::ChallengeIssued, Event::CaptureStarted) => {
                next.phase = Phase::Capturing;
                next.capture.clear();
                let window_s = self.window_of(state);
                Ok((next, vec![Action::BeginCapture { window_s }]))
            }
            (Phase::Capturing, Event::StreamChunk { frames }) => {
                let dim = next.capture.first().or(frames.first()).map_or(0, Vec::len);
                if frames.iter().any(|f| f.len() != dim) {
                    return Err(ProtocolError::InvalidChunk(format!(
                        "frame dimension differs from {dim}"
                    )));
                }
                next.capture.extend(frames.iter().cloned());
                Ok((next, Vec::new()))
            }
            (Phase::Capturing, Event::CaptureEnded) => {
                next.phase = Phase::Evaluating;
                next.deadline = None;
                let stream = FeatureStream {
                    frames: std::mem::take(&mut next.capture),
                    frame_rate_hz: self.session.frame_rate_hz,
                };
                let challenge_id = state.current_challenge().unwrap_or_default().to_string();
                Ok((next, vec![Action::RunDetector { challenge_id, stream }]))
            }
            (Phase::Evaluating, Event::Scored { verdict }) => {
                next.phase = Phase::Decided;
                next.verdicts.push(verdict.clone());
                Ok((next, vec![Action::NotifyUser { verdict: verdict.clone() }]))
            }
            (Phase::Decided, Event::UserDecision { decision }) => match decision {
                UserDecision::Rechallenge => {
                    if state.rechallenge_budget == 0 {
                        return Err(ProtocolError::BudgetExhausted);
                    }
                    next.rechallenge_budget -= 1;
                    self.issue(next, now)
                }
                UserDecision::Proceed | UserDecision::Terminate => {
                    let decision = if *decision == UserDecision::Proceed {
                        FinalDecision::Accepted
                    } else {
                        FinalDecision::Rejected
                    };
                    next.phase = Phase::Closed;
                    next.decision = Some(decision);
                    Ok((next, vec![Action::CloseSession { decision }]))
                }
            },
            _ => Err(illegal()),
        }
    }
}
