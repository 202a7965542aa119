use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid window distribution: {0}")]
    InvalidWindow(String),

    #[error("no events in dataset")]
    NoEvents,

    #[error("monotone likelihood: arm {empty_arm} has no events, log hazard ratio diverges")]
    MonotoneLikelihood { empty_arm: u8 },

    #[error(
        "Newton iterations did not converge after {iterations} steps \
         (theta = {theta}, score = {score:e}, information = {information:e})"
    )]
    NonConvergence {
        iterations: usize,
        theta: f64,
        score: f64,
        information: f64,
    },

    #[error("Cox-based VE {0} is out of range (must be < 1)")]
    OutOfRange(f64),

    #[error("target {target} lies outside the image of the forward map on [{lo}, {hi})")]
    NoBracket { target: f64, lo: f64, hi: f64 },

    #[error("forward map is not strictly increasing near v = {at} (p = {p}, R = {r_trunc})")]
    NotMonotone { at: f64, p: f64, r_trunc: usize },

    #[error("|d beta / d v| = {0:e} is too small for the delta method")]
    DegenerateDerivative(f64),

    #[error("undefined estimate: {0}")]
    UndefinedEstimate(&'static str),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
