use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("infeasible regular ensemble: K*C = {users_times_c} but N*L = {chips_times_l}")]
    Infeasible { users_times_c: usize, chips_times_l: usize },

    #[error("could not build a simple regular graph after {attempts} resamples")]
    RepairFailed { attempts: usize },

    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("noise variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("chip degree {degree} exceeds the configured cap {cap}")]
    ChipDegreeCap { degree: usize, cap: usize },

    #[error("exact enumeration limited to {cap} users, got {users}")]
    EnumerationCap { users: usize, cap: usize },

    #[error("requested window of {window} sweeps but only {available} recorded")]
    Window { window: usize, available: usize },

    #[error("standard error {se} exceeds requested tolerance {tolerance}")]
    Tolerance { se: f64, tolerance: f64 },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
