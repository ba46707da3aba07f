use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: u64, reason: String },

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBounds {
        index: u64,
        x: u32,
        y: u32,
        width: u16,
        height: u16,
    },

    #[error("event {index} has timestamp {t} earlier than its predecessor {prev}")]
    NonMonotonicTime { index: u64, t: u64, prev: u64 },

    #[error("truncated input: expected {expected} records, found {found}")]
    TruncatedRecord { expected: u64, found: u64 },

    #[error("recording rejected before write: {0}")]
    RejectedInvariant(String),

    #[error("invalid time window [{start}, {end})")]
    InvalidWindow { start: u64, end: u64 },

    #[error("degenerate scene: {0}")]
    DegenerateSpec(String),

    #[error("decay constant must be positive and finite, got {0}")]
    InvalidTau(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("loss diverged at epoch {epoch}: {detail}")]
    DivergedLoss { epoch: usize, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("bad image file: {0}")]
    BadImage(String),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
