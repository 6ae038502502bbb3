use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the grid calculus, the simulators and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// One or more validated keys violated their constraints.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("power iteration did not converge after {iterations} iterations (last iterates {previous:e}, {last:e})")]
    NoConvergence {
        iterations: usize,
        previous: f64,
        last: f64,
    },

    #[error("step size fell below minimum at t = {t}: h = {h:e}, error estimate {estimate:e}")]
    StepSizeUnderflow { t: f64, h: f64, estimate: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::NoConvergence { .. } | Error::StepSizeUnderflow { .. }
        )
    }

    /// True for configuration problems detected before any computation ran.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Validation(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
