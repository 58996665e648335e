use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in length do not.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Input data contains NaN or infinite entries.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// LU factorization met an exactly zero pivot.
    #[error("matrix is singular (zero pivot at column {0})")]
    Singular(usize),

    /// An iterative method did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Matsubara samples are not consistent with a real coefficient vector.
    #[error("Matsubara samples are inconsistent with a real expansion (relative residual {0:.3e})")]
    Conjugation(f64),

    /// The Dyson denominator vanished at a Matsubara node.
    #[error("vanishing Dyson denominator at Matsubara index {0}")]
    VanishingDenominator(i64),

    /// Two objects built from incompatible parameters were combined.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True when the error stems from invalid input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::LengthMismatch { .. }
                | Error::NonFinite(_)
                | Error::Incompatible(_)
                | Error::Conjugation(_)
                | Error::Serde(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
