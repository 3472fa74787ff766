use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported grid: {0}")]
    InvalidGrid(String),

    #[error("field contains non-finite samples")]
    InvalidField,

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("unsupported Sobolev level {0}; expected one of -1..=5")]
    UnsupportedLevel(i32),

    #[error("product-space level {0} out of range; expected 0..=3")]
    LevelOutOfRange(u32),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("implicit symbol {value} is not positive at mode {mode:?}")]
    NonPositiveSymbol { mode: Vec<i64>, value: f64 },

    #[error("component mean {0:e} violates the zero-mean contract")]
    NonZeroMean(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("series value {value} at t={t} is not positive")]
    NonPositiveValue { t: f64, value: f64 },

    #[error("beta sweep must be strictly descending and end at 0")]
    UnsortedSweep,

    #[error("sample time {0} is not a multiple of the time step")]
    MisalignedSample(f64),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
