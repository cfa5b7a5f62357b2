//! Newline-delimited JSON encoding of events and actions.
//!
//! One message per line, a short `"t"` tag first:
//! `{"t":"trigger","score":0.7}`. Unknown tags and unknown fields are
//! rejected.

use std::io::{BufRead, Write};

use serde::Deserialize;

use super::{Action, Event};
use crate::error::ProtocolError;

const EVENT_TAGS: [&str; 8] = [
    "trigger",
    "challenge",
    "capture_start",
    "chunk",
    "capture_end",
    "scored",
    "decision",
    "tick",
];
const ACTION_TAGS: [&str; 5] = ["issue", "begin_capture", "run_detector", "notify", "close"];

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Event(Event),
    Action(Action),
}

impl From<Event> for Message {
    fn from(e: Event) -> Self {
        Message::Event(e)
    }
}

impl From<Action> for Message {
    fn from(a: Action) -> Self {
        Message::Action(a)
    }
}

impl Message {
    pub fn tag(&self) -> &'static str {
        match self {
            Message::Event(e) => e.tag(),
            Message::Action(a) => a.tag(),
        }
    }
}

/// Encodes a message as one line, without the trailing newline.
pub fn encode_message(msg: &Message) -> String {
    match msg {
        Message::Event(e) => serde_json::to_string(e),
        Message::Action(a) => serde_json::to_string(a),
    }
    .expect("messages serialize")
}

#[derive(Deserialize)]
struct Tag {
    t: String,
}

/// Decodes one line; `line_no` is reported in errors.
pub fn decode_message(line: &str, line_no: usize) -> Result<Message, ProtocolError> {
    let malformed = |cause: String| ProtocolError::MalformedMessage {
        line: line_no,
        cause,
    };
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.contains('\n') {
        return Err(malformed("more than one line".into()));
    }
    let tag: Tag = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if EVENT_TAGS.contains(&tag.t.as_str()) {
        serde_json::from_str(line)
            .map(Message::Event)
            .map_err(|e| malformed(e.to_string()))
    } else if ACTION_TAGS.contains(&tag.t.as_str()) {
        serde_json::from_str(line)
            .map(Message::Action)
            .map_err(|e| malformed(e.to_string()))
    } else {
        Err(malformed(format!("unknown message kind `{}`", tag.t)))
    }
}

pub fn write_message<W: Write>(out: &mut W, msg: &Message) -> std::io::Result<()> {
    out.write_all(encode_message(msg).as_bytes())?;
    out.write_all(b"\n")
}

/// Reads every message of a stream; blank lines are skipped.
pub fn read_messages<R: BufRead>(input: R) -> impl Iterator<Item = Result<Message, ProtocolError>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            let l = l.map_err(|e| ProtocolError::MalformedMessage {
                line: i + 1,
                cause: e.to_string(),
            })?;
            decode_message(&l, i + 1)
        })
}
