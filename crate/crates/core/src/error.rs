//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix expected to be symmetric is not, within tolerance.
    #[error("matrix is not symmetric: asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    /// A Gram matrix has an eigenvalue below the negative tolerance.
    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    Indefinite { min_eig: f64 },

    /// A linear system could not be solved (singular block or capacitance).
    #[error("singular linear system: {0}")]
    SingularSystem(String),

    /// Caller-supplied argument is invalid.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An eigenvalue / SVD iteration failed to converge.
    #[error("factorization did not converge: {0}")]
    FactorizationFailed(String),

    /// Parse failure in a data file, with 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Malformed binary sketch file.
    #[error("bad sketch file: {0}")]
    BadSketchFile(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
