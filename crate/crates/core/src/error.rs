//! Crate-wide error type.
//!
//! Stage-local failures that the pipeline is expected to absorb (a failed
//! distribution fit, a degenerate neighborhood) have their own small enums in
//! the owning module and convert into [`Error`] only when a caller wants to
//! propagate them.

use std::path::PathBuf;

use crate::doscor::StatsError;
use crate::intensity::FitError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value outside its permitted interval, or an otherwise unusable
    /// argument. `name` identifies the offending parameter.
    #[error("parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Configuration file problems that are not simple range violations:
    /// unknown keys, malformed JSON, wrong value types.
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content. `line` is 1-based; 0 means the location is
    /// not line-addressable (e.g. inside a binary blob).
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("stream: {0}")]
    Stream(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// Range-check helper: `value` must lie in `[lo, hi]`.
    pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
        if !value.is_finite() || value < lo || value > hi {
            return Err(Error::Parameter {
                name,
                reason: format!("{value} outside permitted interval [{lo}, {hi}]"),
            });
        }
        Ok(())
    }

    /// Same check for integer-valued parameters.
    pub(crate) fn check_range_usize(
        name: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    ) -> Result<()> {
        if value < lo || value > hi {
            return Err(Error::Parameter {
                name,
                reason: format!("{value} outside permitted interval [{lo}, {hi}]"),
            });
        }
        Ok(())
    }
}
