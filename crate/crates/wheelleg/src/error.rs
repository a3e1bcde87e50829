//! Error type shared across the crate.

use std::fmt;

/// Everything that can go wrong while building or running a scenario.
#[derive(Debug)]
pub enum Error {
    /// A formula was evaluated outside its mathematical domain.
    Domain(String),
    /// Requested geometry cannot be realized (e.g. turning radius too tight
    /// for the current track width).
    Infeasible(String),
    /// A sample was requested outside the defined range of a path.
    Range(String),
    /// Behavior segments overlap or leave gaps.
    Schedule(String),
    /// Mismatched lengths between paired series.
    Dimension(String),
    /// The plant produced a non-finite state.
    Integration { t: f64, detail: String },
    /// Configuration file could not be parsed or failed validation.
    Parse(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::Range(msg) => write!(f, "range error: {msg}"),
            Error::Schedule(msg) => write!(f, "schedule error: {msg}"),
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Integration { t, detail } => {
                write!(f, "integration failure at t={t:.6}: {detail}")
            }
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
