use thiserror::Error;

/// Unified error type for the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Validation of a measure or coefficient set failed a required check.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A quadrature did not stabilize, or the integrand appears divergent.
    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// A requested simulation would exceed an explicit size budget.
    #[error("size budget exceeded: {0}")]
    Sizing(String),

    /// A path left the explosion guard radius before the horizon.
    #[error("path exploded at t = {t:.6e} with |state| = {norm:.3e}")]
    Explosion { t: f64, norm: f64 },

    /// An ODE step size underflowed while trying to meet the local tolerance.
    #[error("ODE step underflow at t = {t:.6e} (step {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    /// An optimizer exhausted its budget without producing a usable iterate.
    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
