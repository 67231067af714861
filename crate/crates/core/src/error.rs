use thiserror::Error;

/// Errors raised by the library. The variants map onto the CLI exit-code
/// contract through [`Error::is_numerical`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("divergent integral: {message}")]
    Divergence {
        message: String,
        /// Accumulated partial integrals, innermost or outermost panel first.
        partial_sums: Vec<f64>,
    },
    #[error("accuracy error: {message} (achieved {achieved:.3e})")]
    Accuracy { message: String, achieved: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("cost guard: {0}")]
    CostGuard(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("extent error: {0}")]
    Extent(String),
    #[error("boundary error: {0}")]
    Boundary(String),
    #[error("order error: {0}")]
    Order(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of numerical accuracy (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::Accuracy { .. }
                | Error::Resolution(_)
                | Error::Extent(_)
                | Error::Unbounded(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
