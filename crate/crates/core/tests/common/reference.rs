//! A second, table-driven reading of the session protocol, used to
//! model-check the engine. It keeps its own abstract state and picks
//! challenges with its own utility ranking.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use dfcaptcha_core::error::ProtocolError;
use dfcaptcha_core::protocol::{Action, Event, FinalDecision, Phase, ProtocolEngine, SessionState, UserDecision};
use dfcaptcha_core::types::{Outcome, ResponseSegment, Verdict, VerdictReason};
use dfcaptcha_core::ChallengeSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RefState {
    pub phase: Phase,
    pub budget: u32,
    pub issued: Vec<String>,
    pub verdicts: Vec<(Outcome, VerdictReason)>,
    pub deadline: Option<f64>,
    /// Dimension of every frame captured so far.
    pub capture: Vec<usize>,
    pub suspicion: f64,
    pub decision: Option<FinalDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefAction {
    Issue(String),
    Begin(f64),
    Detect { id: String, frames: usize },
    Notify(Outcome, VerdictReason),
    Close(FinalDecision),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefError {
    Illegal,
    Budget,
    NoEligible,
    Mismatch,
    BadChunk,
}

pub struct Reference {
    pub challenges: Vec<ChallengeSpec>,
    pub threshold: f64,
    pub grace_s: f64,
    pub burden_weight: f64,
}

impl Reference {
    /// Mirrors an engine's configuration. Only the parts of the policy the
    /// model check exercises are carried: every catalog entry is assumed
    /// admissible for the call apart from the no-repeat rule.
    pub fn of(engine: &ProtocolEngine) -> Self {
        Reference {
            challenges: engine.catalog.entries().to_vec(),
            threshold: engine.suspicion.trigger_threshold,
            grace_s: engine.session.grace_s,
            burden_weight: engine.policy.burden_weight,
        }
    }

    pub fn initial(&self, budget: u32) -> RefState {
        RefState {
            phase: Phase::Idle,
            budget,
            issued: Vec::new(),
            verdicts: Vec::new(),
            deadline: None,
            capture: Vec::new(),
            suspicion: 0.0,
            decision: None,
        }
    }

    fn pick(&self, issued: &[String], suspicion: f64) -> Option<String> {
        let mut ranked: Vec<(f64, &str)> = self
            .challenges
            .iter()
            .filter(|c| !issued.contains(&c.id))
            .map(|c| {
                let value = (1.0 - c.coverage_prior) * (0.5 + 0.5 * suspicion) - self.burden_weight * c.burden;
                (value, c.id.as_str())
            })
            .collect();
        // Highest value first, then alphabetical.
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        ranked.first().map(|(_, id)| id.to_string())
    }

    fn window(&self, id: &str) -> f64 {
        self.challenges.iter().find(|c| c.id == id).map_or(0.0, |c| c.response_window_s)
    }

    pub fn step(
        &self,
        s: &RefState,
        event: &Event,
        now: f64,
    ) -> Result<(RefState, Vec<RefAction>), RefError> {
        use Phase::*;
        let mut n = s.clone();
        let actions = match (s.phase, event) {
            (ChallengeIssued | Capturing, Event::Tick { now: t }) if s.deadline.is_some_and(|d| *t > d) => {
                n.phase = Decided;
                n.deadline = None;
                n.capture.clear();
                n.verdicts.push((Outcome::Fail, VerdictReason::Timeout));
                vec![RefAction::Notify(Outcome::Fail, VerdictReason::Timeout)]
            }
            (_, Event::Tick { .. }) => vec![],
            (Idle, Event::Trigger { score }) if *score < self.threshold => vec![],
            (Idle, Event::Trigger { score }) => {
                let id = self.pick(&s.issued, *score).ok_or(RefError::NoEligible)?;
                n.phase = Triggered;
                n.suspicion = *score;
                n.issued.push(id.clone());
                vec![RefAction::Issue(id)]
            }
            (Triggered, Event::ChallengeSent { id }) => {
                if Some(id) != s.issued.last() {
                    return Err(RefError::Mismatch);
                }
                n.phase = ChallengeIssued;
                n.deadline = Some(now + self.window(id) + self.grace_s);
                vec![]
            }
            (ChallengeIssued, Event::CaptureStarted) => {
                n.phase = Capturing;
                n.capture.clear();
                vec![RefAction::Begin(self.window(s.issued.last().unwrap()))]
            }
            (Capturing, Event::StreamChunk { frames }) => {
                let expected = s.capture.first().copied().or(frames.first().map(Vec::len));
                for f in frames {
                    if Some(f.len()) != expected {
                        return Err(RefError::BadChunk);
                    }
                    n.capture.push(f.len());
                }
                vec![]
            }
            (Capturing, Event::CaptureEnded) => {
                n.phase = Evaluating;
                n.deadline = None;
                n.capture.clear();
                vec![RefAction::Detect {
                    id: s.issued.last().unwrap().clone(),
                    frames: s.capture.len(),
                }]
            }
            (Evaluating, Event::Scored { verdict }) => {
                n.phase = Decided;
                n.verdicts.push((verdict.outcome, verdict.reason));
                vec![RefAction::Notify(verdict.outcome, verdict.reason)]
            }
            (Decided, Event::UserDecision { decision: UserDecision::Rechallenge }) => {
                if s.budget == 0 {
                    return Err(RefError::Budget);
                }
                let id = self.pick(&s.issued, s.suspicion).ok_or(RefError::NoEligible)?;
                n.budget -= 1;
                n.phase = Triggered;
                n.issued.push(id.clone());
                vec![RefAction::Issue(id)]
            }
            (Decided, Event::UserDecision { decision }) => {
                let f = if *decision == UserDecision::Proceed {
                    FinalDecision::Accepted
                } else {
                    FinalDecision::Rejected
                };
                n.phase = Closed;
                n.decision = Some(f);
                vec![RefAction::Close(f)]
            }
            _ => return Err(RefError::Illegal),
        };
        Ok((n, actions))
    }
}

fn error_kind(e: &ProtocolError) -> Option<RefError> {
    Some(match e {
        ProtocolError::IllegalTransition { .. } => RefError::Illegal,
        ProtocolError::BudgetExhausted => RefError::Budget,
        ProtocolError::NoEligibleChallenge => RefError::NoEligible,
        ProtocolError::ChallengeMismatch { .. } => RefError::Mismatch,
        ProtocolError::InvalidChunk(_) => RefError::BadChunk,
        _ => return None,
    })
}

fn abstract_action(a: &Action) -> RefAction {
    match a {
        Action::IssueChallenge { challenge } => RefAction::Issue(challenge.id.clone()),
        Action::BeginCapture { window_s } => RefAction::Begin(*window_s),
        Action::RunDetector { challenge_id, stream } => RefAction::Detect {
            id: challenge_id.clone(),
            frames: stream.len(),
        },
        Action::NotifyUser { verdict } => RefAction::Notify(verdict.outcome, verdict.reason),
        Action::CloseSession { decision } => RefAction::Close(*decision),
    }
}

fn agrees(engine: &SessionState, r: &RefState) -> bool {
    engine.phase == r.phase
        && engine.rechallenge_budget == r.budget
        && engine.issued.iter().map(|c| &c.id).eq(r.issued.iter())
        && engine.verdicts.iter().map(|v| (v.outcome, v.reason)).eq(r.verdicts.iter().copied())
        && engine.deadline == r.deadline
        && engine.capture.iter().map(Vec::len).eq(r.capture.iter().copied())
        && engine.suspicion == r.suspicion
        && engine.decision == r.decision
}

fn scored(outcome: Outcome) -> Verdict {
    let score = if outcome == Outcome::Pass { 0.4 } else { 9.0 };
    Verdict::new(outcome, score, 0.8, ResponseSegment::empty(), VerdictReason::Scored).unwrap()
}

/// The event alphabet offered in a given state. Only the challenge id and the
/// tick times depend on the state; everything else is offered everywhere.
fn alphabet(r: &RefState, threshold: f64) -> Vec<Event> {
    let current = r.issued.last().cloned().unwrap_or_else(|| "drop-object".into());
    let deadline = r.deadline.unwrap_or(0.0);
    vec![
        Event::Trigger { score: 0.9 },
        Event::Trigger { score: threshold },
        Event::Trigger { score: threshold - 0.25 },
        Event::ChallengeSent { id: current },
        Event::ChallengeSent { id: "not-in-catalog".into() },
        Event::CaptureStarted,
        Event::StreamChunk { frames: vec![vec![0.5; 16]; 2] },
        Event::StreamChunk { frames: vec![vec![0.5; 3]] },
        Event::StreamChunk { frames: vec![] },
        Event::CaptureEnded,
        Event::Scored { verdict: scored(Outcome::Pass) },
        Event::Scored { verdict: scored(Outcome::Fail) },
        Event::UserDecision { decision: UserDecision::Proceed },
        Event::UserDecision { decision: UserDecision::Rechallenge },
        Event::UserDecision { decision: UserDecision::Terminate },
        Event::Tick { now: 0.5 },
        Event::Tick { now: deadline },
        Event::Tick { now: deadline + 1e-9 },
        Event::Tick { now: 1e6 },
    ]
}

#[derive(Debug, Default)]
pub struct ModelCheckReport {
    pub states: usize,
    pub transitions: usize,
    pub phases: BTreeSet<Phase>,
    pub max_rounds: usize,
}

type Key = String;

fn key(r: &RefState) -> Key {
    // Capture contents matter only through their dimension and whether any
    // frames arrived; longer captures behave identically.
    let capture = (r.capture.first().copied(), r.capture.len().min(2));
    format!(
        "{:?}|{}|{:?}|{:?}|{:?}|{:?}|{}|{:?}",
        r.phase, r.budget, r.issued, r.verdicts, r.deadline, capture, r.suspicion, r.decision
    )
}

/// Explores every state reachable under the event alphabet, comparing each
/// engine transition with the reference. Fails on the first disagreement,
/// on a state from which no session can close, or when a session exceeds
/// `budget + 1` rounds.
pub fn model_check(engine: &ProtocolEngine) -> Result<ModelCheckReport, String> {
    let reference = Reference::of(engine);
    let budget = engine.session.rechallenge_budget;
    let threshold = engine.suspicion.trigger_threshold;
    let now = 0.0;

    let mut report = ModelCheckReport::default();
    let mut seen: BTreeMap<Key, usize> = BTreeMap::new();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let mut closed: Vec<bool> = Vec::new();
    let mut queue = VecDeque::new();

    let start = (engine.initial_state(), reference.initial(budget), Vec::<Event>::new());
    seen.insert(key(&start.1), 0);
    edges.push(Vec::new());
    closed.push(false);
    queue.push_back(start);

    while let Some((state, r, trace)) = queue.pop_front() {
        let from = seen[&key(&r)];
        report.phases.insert(r.phase);
        report.max_rounds = report.max_rounds.max(r.issued.len());
        if r.issued.len() > budget as usize + 1 {
            return Err(format!("{} rounds exceed budget {budget}: {trace:?}", r.issued.len()));
        }
        closed[from] = r.phase == Phase::Closed;
        for event in alphabet(&r, threshold) {
            report.transitions += 1;
            let got = engine.advance(&state, &event, now);
            let want = reference.step(&r, &event, now);
            let (next_state, next_ref) = match (got, want) {
                (Ok((s, a)), Ok((rs, ra))) => {
                    let acts: Vec<RefAction> = a.iter().map(abstract_action).collect();
                    if acts != ra || !agrees(&s, &rs) {
                        return Err(format!(
                            "after {trace:?} event {event:?}: engine {:?} {acts:?}, reference {rs:?} {ra:?}",
                            s.phase
                        ));
                    }
                    (s, rs)
                }
                (Err(e), Err(k)) if error_kind(&e) == Some(k) => continue,
                (got, want) => {
                    return Err(format!(
                        "after {trace:?} event {event:?}: engine {:?}, reference {:?}",
                        got.map(|(s, _)| s.phase),
                        want.map(|(s, _)| s.phase)
                    ))
                }
            };
            let k = key(&next_ref);
            let to = match seen.get(&k) {
                Some(&i) => i,
                None => {
                    let i = seen.len();
                    seen.insert(k, i);
                    edges.push(Vec::new());
                    closed.push(false);
                    let mut t = trace.clone();
                    t.push(event.clone());
                    queue.push_back((next_state, next_ref, t));
                    i
                }
            };
            edges[from].push(to);
        }
    }
    report.states = seen.len();

    // Every state must be able to reach a closed session.
    let mut reverse = vec![Vec::new(); edges.len()];
    for (from, tos) in edges.iter().enumerate() {
        for &to in tos {
            reverse[to].push(from);
        }
    }
    let mut can_close = closed.clone();
    let mut stack: Vec<usize> = (0..closed.len()).filter(|&i| closed[i]).collect();
    while let Some(i) = stack.pop() {
        for &p in &reverse[i] {
            if !can_close[p] {
                can_close[p] = true;
                stack.push(p);
            }
        }
    }
    if let Some(stuck) = can_close.iter().position(|c| !c) {
        let k = seen.iter().find(|(_, &i)| i == stuck).map(|(k, _)| k.clone());
        return Err(format!("no way to close from state {k:?}"));
    }
    Ok(report)
}
