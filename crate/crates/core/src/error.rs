use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {field} at entry {entry}")]
    NonFiniteValue { field: &'static str, entry: usize },

    #[error("non-positive variance at entry {entry}, dimension {dim}")]
    NonPositiveVariance { entry: usize, dim: usize },

    #[error("timestamps decrease at entry {entry} ({previous} > {current})")]
    TimestampOrderViolation { entry: usize, previous: f64, current: f64 },

    #[error("zero-length descriptor has no direction")]
    ZeroVector,

    #[error("member count mismatch: query has {query}, database has {database}")]
    MemberCountMismatch { query: usize, database: usize },

    #[error("no database entries are visible to the query")]
    EmptyVisibleSet,

    #[error("method {method} cannot run on this data: {reason}")]
    MethodDataMismatch { method: &'static str, reason: String },

    #[error("session evaluation requires timestamps")]
    MissingTimestamps,

    #[error("evaluation requires poses")]
    MissingPoses,

    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),

    #[error("no query has a ground-truth match")]
    NoMatchableQueries,

    #[error("K = {requested} exceeds the stored candidate list length {available}")]
    KExceedsCandidates { requested: usize, available: usize },

    #[error("metric undefined: the {0} class is empty")]
    DegenerateClass(&'static str),

    #[error("metric requires at least one prediction")]
    EmptyRun,

    #[error("curve of kind {found:?} cannot be used here, expected {expected}")]
    WrongCurveKind { found: crate::metrics::CurveKind, expected: &'static str },

    #[error("invalid world spec: {0}")]
    InvalidSpec(String),

    #[error("bad magic bytes, not a descriptor file")]
    BadMagic,

    #[error("unsupported descriptor file version {0}")]
    VersionUnsupported(u16),

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("malformed CSV fixture: {0}")]
    Csv(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}
