use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the annotation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation error{}: {message}", turn_suffix(.turn_id))]
    Validation {
        turn_id: Option<usize>,
        message: String,
    },

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("quote mismatch: {message} (closest match at byte {closest_offset})")]
    QuoteMismatch {
        message: String,
        closest_offset: usize,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error after {retries} retries: {message}")]
    Transport { retries: u32, message: String },

    #[error("replay cache miss for key {key}")]
    CacheMiss { key: String },

    #[error("annotation run failed for turns {failed_turns:?}: {message}")]
    Run {
        failed_turns: Vec<usize>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn turn_suffix(turn_id: &Option<usize>) -> String {
    match turn_id {
        Some(t) => format!(" at turn {t}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(turn_id: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Validation {
            turn_id: turn_id.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Maps a `serde_json` failure onto a byte offset within `raw`.
    pub(crate) fn from_json(raw: &str, err: &serde_json::Error) -> Self {
        Error::Parse {
            offset: line_col_to_offset(raw, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

fn line_col_to_offset(raw: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = raw
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(raw.len())
}

pub type Result<T> = std::result::Result<T, Error>;
