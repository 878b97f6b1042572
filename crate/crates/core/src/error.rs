use thiserror::Error;

use crate::types::Stage;

pub type Result<T, E = RecourseError> = std::result::Result<T, E>;

/// Errors raised anywhere in the recourse library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecourseError {
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid feature constraint on `{feature}`: {reason}")]
    InvalidConstraint { feature: String, reason: String },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("unknown point id {0}")]
    UnknownId(usize),

    #[error("point {0} is already deactivated")]
    AlreadyDeactivated(usize),

    #[error("no active points remain in the index")]
    IndexExhausted,

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("quantile must lie in (0, 1), got {0}")]
    InvalidQuantile(f64),

    #[error("anchor distance {distance} exceeds twice the tolerance ({limit})")]
    DeviationHypothesis { distance: f64, limit: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),

    #[error("{stage} stage exceeded {limit} iterations")]
    MaxIterations { stage: Stage, limit: usize },

    #[error("no admissible candidate among {candidates} neighbours at step {step}")]
    NoAdmissibleCandidate { step: usize, candidates: usize },

    #[error("neighbourhood of vertex {vertex} is empty after filtering")]
    EmptyNeighbourhood { vertex: usize },

    #[error("no path from vertex {from} to vertex {to}")]
    NoPath { from: usize, to: usize },

    #[error("unsupported dimension {0} (plotting requires d = 2)")]
    UnsupportedDimension(usize),

    #[error("csv error at row {row}, column `{column}`: {message}")]
    CsvCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl RecourseError {
    /// True for failures that a relaxed density threshold might fix.
    pub fn is_connectivity_failure(&self) -> bool {
        matches!(
            self,
            RecourseError::NoPath { .. }
                | RecourseError::MaxIterations {
                    stage: Stage::Exploit,
                    ..
                }
                | RecourseError::EmptyNeighbourhood { .. }
                | RecourseError::IndexExhausted
        )
    }
}

impl From<std::io::Error> for RecourseError {
    fn from(e: std::io::Error) -> Self {
        RecourseError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RecourseError {
    fn from(e: serde_json::Error) -> Self {
        RecourseError::Serde(e.to_string())
    }
}

impl From<csv::Error> for RecourseError {
    fn from(e: csv::Error) -> Self {
        RecourseError::Csv(e.to_string())
    }
}

/// A stage error together with whatever the stage produced before failing.
#[derive(Debug, Clone)]
pub struct StageFailure<P> {
    pub error: RecourseError,
    pub partial: P,
}

impl<P> StageFailure<P> {
    pub fn new(error: RecourseError, partial: P) -> Self {
        Self { error, partial }
    }
}
