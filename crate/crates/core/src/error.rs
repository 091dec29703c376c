use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {constraint} (got {value})")]
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("non-finite Hamiltonian entry at t = {time:e} s")]
    NonFiniteHamiltonian { time: f64 },

    #[error(
        "step refinement underflow: step {step:e} s below minimum {min_step:e} s, \
         last observable change {last_change:e} > tolerance {tolerance:e}"
    )]
    StepUnderflow {
        step: f64,
        min_step: f64,
        last_change: f64,
        tolerance: f64,
    },

    #[error("{kind} drive cannot address the {transition} transition")]
    TransitionMismatch {
        kind: &'static str,
        transition: &'static str,
    },

    #[error("touchstone line {line}: {message}")]
    Touchstone { line: usize, message: String },

    #[error("frequencies must be strictly increasing (sample {index})")]
    NonMonotonicFrequency { index: usize },

    #[error("reflection magnitude {magnitude} exceeds passive bound at sample {index}")]
    NonPassive { index: usize, magnitude: f64 },

    #[error("no resonance: {0}")]
    NoResonance(String),

    #[error("circle fit is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("degenerate transition frequencies: {0}")]
    Degenerate(String),

    #[error("level anti-crossing singularity: |gamma B_par| = {ratio:.4} D0")]
    AntiCrossing { ratio: f64 },

    #[error("no resolvable peaks: {0}")]
    NoResolvablePeaks(String),

    #[error("calibration out of range: {0}")]
    CalibrationRange(String),
}

/// Returns `Ok(value)` when `ok` holds, otherwise an `InvalidParameter` error.
pub(crate) fn check(ok: bool, name: &'static str, constraint: &'static str, value: f64) -> Result<f64> {
    if ok {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            constraint,
            value,
        })
    }
}
