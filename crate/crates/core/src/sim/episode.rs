//! One simulated call, driven end to end through the protocol engine.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::agents::{synthesize_response, Caller};
use super::channel::apply_channel;
use super::{Scenario, Truth};
use crate::error::SimError;
use crate::extraction::locate;
use crate::protocol::{Action, Event, FinalDecision, SessionState, UserDecision};
use crate::rng::SeedStream;
use crate::suspicion::compute_suspicion;
use crate::types::{FeatureStream, Outcome, Verdict};

/// The scripted victim: accept on a pass, ask for another challenge after a
/// fail while allowed, hang up otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserPolicy {
    /// How many failed rounds the user answers with a re-challenge.
    pub rechallenges_after_fail: u32,
}

impl Default for UserPolicy {
    fn default() -> Self {
        UserPolicy {
            rechallenges_after_fail: 1,
        }
    }
}

impl UserPolicy {
    fn decide(&self, state: &SessionState, verdict: &Verdict, can_rechallenge: bool) -> UserDecision {
        if verdict.outcome == Outcome::Pass {
            return UserDecision::Proceed;
        }
        let fails = state.verdicts.iter().filter(|v| v.outcome == Outcome::Fail).count() as u32;
        if fails <= self.rechallenges_after_fail && can_rechallenge {
            UserDecision::Rechallenge
        } else {
            UserDecision::Terminate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub truth: Truth,
    pub decision: FinalDecision,
    pub rounds: usize,
    pub challenges: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub seed: u64,
}

impl EpisodeOutcome {
    pub fn first_score(&self) -> f64 {
        self.verdicts.first().map_or(0.0, |v| v.anomaly_score)
    }
}

struct Driver<'a> {
    scenario: &'a Scenario,
    engine: crate::protocol::ProtocolEngine,
    state: SessionState,
    pending: VecDeque<Action>,
    now: f64,
}

impl Driver<'_> {
    fn feed(&mut self, event: Event, at: f64) -> Result<(), SimError> {
        self.now = self.now.max(at);
        let (next, actions) = self.engine.advance(&self.state, &event, self.now)?;
        self.state = next;
        self.pending.extend(actions);
        Ok(())
    }

    fn deadline_passed(&self, at: f64) -> bool {
        self.state.deadline.is_some_and(|d| at > d)
    }

    /// Feeds a tick when `at` is past the deadline; returns whether it fired.
    fn tick_if_late(&mut self, at: f64) -> Result<bool, SimError> {
        if self.deadline_passed(at) {
            self.feed(Event::Tick { now: at }, at)?;
            return Ok(true);
        }
        Ok(false)
    }

    fn perform(
        &mut self,
        caller: Caller<'_>,
        challenge: &crate::types::ChallengeSpec,
        round: &SeedStream,
    ) -> Result<(), SimError> {
        let sc = self.scenario;
        let fps = sc.engine.session.frame_rate_hz;
        self.feed(Event::ChallengeSent { id: challenge.id.clone() }, self.now)?;
        let start = self.now + caller.reaction_latency_s();
        if self.tick_if_late(start)? {
            return Ok(());
        }
        self.feed(Event::CaptureStarted, start)?;
        let raw = synthesize_response(caller, challenge, fps, &mut round.derive("response").rng());
        let received = apply_channel(&raw, &sc.channel, &mut round.derive("channel").rng());
        let mut sent = 0usize;
        for chunk in received.frames.chunks(sc.chunk_frames.max(1)) {
            sent += chunk.len();
            let at = start + sent as f64 / fps;
            if self.tick_if_late(at)? {
                return Ok(());
            }
            self.feed(Event::StreamChunk { frames: chunk.to_vec() }, at)?;
        }
        self.feed(Event::CaptureEnded, self.now)
    }

    fn evaluate(&self, challenge_id: &str, stream: &FeatureStream) -> Result<Verdict, SimError> {
        let sc = self.scenario;
        let (template, model) = sc.detector_for(challenge_id)?;
        match locate(stream, template, &sc.extraction) {
            Ok(found) => Ok(model.decide(&found.segment)?),
            Err(_) => Ok(Verdict::extraction_failed()),
        }
    }
}

/// Runs one call of the given truth class. Deterministic in `seed`.
pub fn run_episode(scenario: &Scenario, truth: Truth, seed: u64) -> Result<EpisodeOutcome, SimError> {
    let root = SeedStream::root(seed).derive(truth.label());
    let mut engine = scenario.engine.clone();
    engine.selection_seed = root.derive("select");
    let caller = match truth {
        Truth::Genuine => Caller::Genuine(&scenario.genuine),
        Truth::Deepfake => Caller::Deepfake {
            person: &scenario.genuine,
            fake: &scenario.deepfake,
        },
    };
    let mut d = Driver {
        scenario,
        state: engine.initial_state(),
        engine,
        pending: VecDeque::new(),
        now: 0.0,
    };
    let score = compute_suspicion(&d.engine.context.indicators, &d.engine.suspicion);
    d.feed(Event::Trigger { score }, 0.0)?;
    if d.pending.is_empty() {
        return Err(SimError::ConfigInvalid(format!(
            "suspicion {score} does not reach the trigger threshold"
        )));
    }

    let mut round = 0u64;
    let mut decision = None;
    while let Some(action) = d.pending.pop_front() {
        match action {
            Action::IssueChallenge { challenge } => {
                let seed = root.derive("round").index(round);
                round += 1;
                d.perform(caller, &challenge, &seed)?;
            }
            Action::BeginCapture { .. } => {}
            Action::RunDetector { challenge_id, stream } => {
                let verdict = d.evaluate(&challenge_id, &stream)?;
                d.feed(Event::Scored { verdict }, d.now)?;
            }
            Action::NotifyUser { verdict } => {
                let can = d.state.rechallenge_budget > 0 && !d.engine.eligible(&d.state).is_empty();
                let choice = scenario.user.decide(&d.state, &verdict, can);
                d.feed(Event::UserDecision { decision: choice }, d.now)?;
            }
            Action::CloseSession { decision: f } => decision = Some(f),
        }
    }
    let decision = decision.ok_or_else(|| SimError::ConfigInvalid("session did not close".into()))?;
    Ok(EpisodeOutcome {
        truth,
        decision,
        rounds: d.state.verdicts.len(),
        challenges: d.state.issued.iter().map(|c| c.id.clone()).collect(),
        verdicts: d.state.verdicts,
        seed,
    })
}
