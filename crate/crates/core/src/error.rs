//! Error type shared by every stage of the toolkit.

use std::path::PathBuf;

use crate::stats::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    /// A non-finite or otherwise unusable sample.
    #[error("data error in sequence `{id}`{}: {message}", row.map(|r| format!(" at line {r}")).unwrap_or_default())]
    Data {
        id: String,
        row: Option<u64>,
        message: String,
    },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("every coefficient fell below the threshold {eps:e}; no model remains")]
    EmptyModel { eps: f64 },

    #[error("{family} fit did not converge after {iterations} iterations")]
    Convergence { family: Family, iterations: usize },

    #[error("{family}: samples outside the distribution support ({message})")]
    Domain { family: Family, message: String },

    #[error("no distribution family could be fitted")]
    EmptyResult,

    #[error("config error: {0}")]
    Config(String),

    /// An error raised inside one pipeline stage.
    #[error("stage `{stage}`{}: {source}", sequence.as_ref().map(|s| format!(" (sequence `{s}`)")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        sequence: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error class, used by the CLI for exit codes and by the C ABI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parameter(_) | Error::Config(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Data { .. }
            | Error::DegenerateSignal(_)
            | Error::Bounds(_)
            | Error::InsufficientData(_)
            | Error::Domain { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::Singular(_)
            | Error::EmptyModel { .. }
            | Error::Convergence { .. }
            | Error::EmptyResult => ErrorClass::Numeric,
            Error::Stage { source, .. } => source.class(),
        }
    }

    /// Tag with the pipeline stage and, when known, the sequence id.
    pub fn at_stage(self, stage: &'static str, sequence: Option<&str>) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                sequence: sequence.map(str::to_string),
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
