use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("aliasing margin violated: grid size {grid} < 4 x cutoff {cutoff}")]
    Aliasing { grid: usize, cutoff: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("density {value} outside certified range [{lower}, {upper}]")]
    DensityOutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("non-positive weight sample {0}")]
    NonPositiveWeight(f64),

    #[error("time {t} outside trajectory range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("step size underflow in window starting at t = {window_start}: h = {h:e} at t = {t}")]
    StepSizeUnderflow { window_start: f64, t: f64, h: f64 },

    #[error("fixed-point iteration failed in window [{t_start}, {t_end}] after {} iterations: {reason}", history.len())]
    PicardFailure {
        t_start: f64,
        t_end: f64,
        reason: String,
        history: Vec<f64>,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
