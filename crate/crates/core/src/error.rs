//! Error types for each subsystem.

use thiserror::Error;

use crate::protocol::Phase;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("catalog has no entries")]
    Empty,
    #[error("duplicate challenge id `{0}`")]
    DuplicateId(String),
    #[error("invalid `{field}` in entry `{entry}`: {reason}")]
    InvariantViolation {
        field: String,
        entry: String,
        reason: String,
    },
    #[error("unsupported catalog version {0}")]
    UnsupportedVersion(u32),
    #[error("catalog parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl CatalogError {
    pub(crate) fn violation(field: &str, entry: &str, reason: impl Into<String>) -> Self {
        CatalogError::InvariantViolation {
            field: field.to_string(),
            entry: entry.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("stream has {stream} frames, template needs {template}")]
    StreamTooShort { stream: usize, template: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("best correlation {best} is below the floor {floor}")]
    NoActivity { best: f64, floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("dimension {0} has zero variance and no regularizer")]
    DegenerateDimension(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("event `{event}` is not legal in phase {phase:?}")]
    IllegalTransition { phase: Phase, event: &'static str },
    #[error("re-challenge requested with no budget left")]
    BudgetExhausted,
    #[error("no eligible challenge for this call")]
    NoEligibleChallenge,
    #[error("challenge `{got}` sent but `{expected}` was issued")]
    ChallengeMismatch { expected: String, got: String },
    #[error("invalid stream chunk: {0}")]
    InvalidChunk(String),
    #[error("malformed message on line {line}: {cause}")]
    MalformedMessage { line: usize, cause: String },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("no detector model for challenge `{0}`")]
    MissingModel(String),
}

/// A domain value outside its allowed range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct InvalidValue {
    pub field: &'static str,
    pub reason: String,
}

impl InvalidValue {
    pub(crate) fn new(field: &'static str, reason: impl Into<String>) -> Self {
        InvalidValue {
            field,
            reason: reason.into(),
        }
    }
}
