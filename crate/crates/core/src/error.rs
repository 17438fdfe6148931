//! Error type shared by every module.
//!
//! Two broad classes matter to callers: configuration errors (bad parameters,
//! inconsistent dimensions, rejected activation/weight combinations) and
//! numeric errors (overflow, failed convergence of an iterative solver,
//! degenerate sample input). The CLI maps them to distinct exit codes.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. Detected before any sampling.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numeric failure at run time: non-finite values, failed bracketing,
    /// iteration limits, degenerate statistics.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

/// Shorthand for returning a configuration error.
#[macro_export]
macro_rules! config_err {
    ($($arg:tt)*) => {
        return Err($crate::Error::Config(format!($($arg)*)))
    };
}

/// Shorthand for returning a numeric error.
#[macro_export]
macro_rules! numeric_err {
    ($($arg:tt)*) => {
        return Err($crate::Error::Numeric(format!($($arg)*)))
    };
}
