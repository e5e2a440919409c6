use thiserror::Error;

use crate::statespace::{AtomLevel, BasisState};

#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock truncation n_max = {0} is too small: the state |11>|2> needs n_max >= 2")]
    TruncationTooSmall(usize),

    #[error("invalid transition |{upper}><{lower}|: upper level must be e or u, lower level must be a ground level")]
    InvalidTransition { upper: AtomLevel, lower: AtomLevel },

    #[error("laser transition |{upper}><{lower}| is not driven by any field in the five-level scheme")]
    UndrivenTransition { upper: AtomLevel, lower: AtomLevel },

    #[error("basis state {0} is not part of the space")]
    StateOutOfRange(BasisState),

    #[error("basis state {0} appears more than once in the subset")]
    DuplicateState(BasisState),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate dark state: all coefficients vanish")]
    DegenerateDarkState,

    #[error("merged pulse phases differ ({first} vs {second} rad); the shared pulse needs a single phase")]
    IncompatibleMergePhases { first: f64, second: f64 },

    #[error("norm drift {drift:.3e} at t = {time:.4} exceeds {tolerance:.1e}; step size h = {step:.3e} is too large")]
    NormDrift { time: f64, drift: f64, tolerance: f64, step: f64 },

    #[error("trace drift {drift:.3e} at t = {time:.4} exceeds {tolerance:.1e}; step size h = {step:.3e} is too large")]
    TraceDrift { time: f64, drift: f64, tolerance: f64, step: f64 },

    #[error("density matrix lost positivity at t = {time:.4}: min eigenvalue {min_eigenvalue:.3e}")]
    Positivity { time: f64, min_eigenvalue: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
