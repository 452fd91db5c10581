use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {channels}x{height}x{width}: {reason}")]
    InvalidShape {
        channels: usize,
        height: usize,
        width: usize,
        reason: &'static str,
    },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("inverse DFT left an imaginary residual of {residual:e} (limit {limit:e})")]
    ImaginaryResidualExceeded { residual: f64, limit: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("timestep {step} outside schedule range 0..={max}")]
    StepOutOfRange { step: usize, max: usize },
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("watermark masks overlap at bin ({row}, {col})")]
    MaskOverlap { row: usize, col: usize },
    #[error("{0} must not be empty")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
