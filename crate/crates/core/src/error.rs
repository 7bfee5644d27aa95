use thiserror::Error;

/// Errors raised by model construction and simulation entry points.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates its precondition. `field` names the offending input.
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    /// The input is well-formed but numerically degenerate (for example a zero channel estimate).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A matrix inversion was refused because the system is too close to singular.
    #[error("ill-conditioned system: condition number {condition:.3e} exceeds {limit:.3e}")]
    IllConditioned { condition: f64, limit: f64 },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
