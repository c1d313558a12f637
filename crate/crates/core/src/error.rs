//! Error type shared across the crate.

use std::fmt;

/// Errors produced by signal, line-model, synthesis and location routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input violated an invariant (non-finite sample, length mismatch, ...).
    InvalidInput(String),
    /// A frequency bin where an ideal-line denominator vanished (resonant
    /// open/short). Callers skip or perturb the bin.
    SingularFrequency { omega: f64 },
    /// Localization criterion was flat: no extremum with sufficient margin.
    NoLocalization { margin: f64 },
    /// Wavefront detector found no sample above threshold.
    NoArrival,
    /// Arrival picks are inconsistent with the line length (|dt| > L/v).
    OutOfLine { delta_t: f64, max_delta_t: f64 },
    /// Time-domain simulation diverged or produced non-finite values.
    SimulationUnstable { step: usize },
    /// Configuration file problem (unknown key, bad value, missing key).
    Config(String),
    /// I/O error while reading or writing CSV artifacts.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::SingularFrequency { omega } => {
                write!(f, "singular frequency bin at omega = {omega} rad/s")
            }
            Error::NoLocalization { margin } => {
                write!(f, "no localization: criterion profile is flat (margin {margin})")
            }
            Error::NoArrival => write!(f, "no wavefront arrival detected"),
            Error::OutOfLine { delta_t, max_delta_t } => write!(
                f,
                "arrival picks inconsistent with line: |dt| = {delta_t} s exceeds {max_delta_t} s"
            ),
            Error::SimulationUnstable { step } => {
                write!(f, "time-domain simulation unstable at step {step}")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
