use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error("invalid label {value} at pixel ({x}, {y})")]
    InvalidLabel { value: u8, x: usize, y: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("all frames filtered (tau = {tau})")]
    AllFramesFiltered { tau: f64 },

    #[error("no front-face normals")]
    NoFrontNormals,

    #[error("missing joint '{joint}' in frame {frame}")]
    MissingJoint { joint: String, frame: i64 },

    #[error("non-finite coordinate for joint '{joint}' in frame {frame}")]
    NonFinite { joint: String, frame: i64 },

    #[error("degenerate segment {segment} in angle '{angle}'")]
    DegenerateSegment { angle: String, segment: String },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("zero-variance input")]
    ZeroVariance,

    #[error("too few reference rows: need {needed}, have {available}")]
    TooFewReference { needed: usize, available: usize },

    #[error("degenerate healthy baseline ({0})")]
    DegenerateBaseline(f64),

    #[error("unmatched subject-side: {subject}/{side}")]
    UnmatchedSubjectSide { subject: String, side: String },

    #[error("duplicate row: {0}")]
    DuplicateRow(String),

    #[error("invalid skeleton spec: {0}")]
    InvalidSkeleton(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stage '{stage}' failed for recording '{recording}': {source}")]
    Stage {
        stage: &'static str,
        recording: String,
        #[source]
        source: Box<Error>,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str, recording: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            recording: recording.into(),
            source: Box::new(self),
        }
    }

    /// True when the failure indicates a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Invariant(_) => true,
            Error::Stage { source, .. } => source.is_internal(),
            _ => false,
        }
    }
}
