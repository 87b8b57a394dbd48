use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("duplicate row for {ticker} on {date}")]
    Duplicate { ticker: String, date: NaiveDate },
    #[error("{ticker} is missing dates: {missing:?}")]
    Alignment { ticker: String, missing: Vec<NaiveDate> },
    #[error("cannot chain trend windows {left} and {right}: {reason}")]
    Chaining {
        left: usize,
        right: usize,
        reason: &'static str,
    },
    #[error("contingency table is degenerate")]
    Degenerate,
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("masking error: {0}")]
    Masking(String),
    #[error("no sector mapped for ticker {0}")]
    UnmappedTicker(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }
}
