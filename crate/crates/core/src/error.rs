use thiserror::Error;

pub type Result<T, E = GlaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("mass matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("non-finite state{}", .step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFiniteState { step: Option<u64> },

    #[error("degenerate OU covariance for step h = {h:e}")]
    DegenerateCovariance { h: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unstable linear recursion: spectral radius {spectral_radius} >= 1")]
    UnstableScheme { spectral_radius: f64 },

    #[error("too few samples: {samples} for {batches} batches (need at least {required})")]
    TooFewSamples {
        samples: u64,
        batches: usize,
        required: u64,
    },

    #[error("Gibbs measure is not normalizable: {0}")]
    UnboundedMeasure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl GlaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GlaError::InvalidInput(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(GlaError::DimensionMismatch { expected, actual })
        }
    }
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GlaError::invalid(format!("{name} must be positive and finite, got {value}")))
    }
}
