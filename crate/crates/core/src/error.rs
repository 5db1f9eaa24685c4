use thiserror::Error;

/// Errors raised by the models and estimators in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("division by zero: {0}")]
    DivisionDomain(&'static str),

    #[error("frequency grid too coarse: {reason}; at least {required_samples} samples are needed")]
    Resolution {
        reason: String,
        required_samples: usize,
    },

    #[error("visibility undefined: all counts are zero")]
    UndefinedVisibility,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("time tags on channel {channel} are not sorted (index {index})")]
    InputOrder { channel: u8, index: usize },

    #[error("degenerate fit: {0}")]
    FitDegenerate(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Fails unless `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

pub(crate) fn require_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("must be non-negative and finite, got {value}"),
        ))
    }
}

pub(crate) fn require_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {value}")))
    }
}
