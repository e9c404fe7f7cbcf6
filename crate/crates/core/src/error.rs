use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A parameter violates a model constraint (named in the message).
    #[error("constraint violated: {0}")]
    Constraint(String),
    /// A simulation would exceed its resource budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("root finding failed: {0}")]
    Convergence(String),
    /// The requested value lies beyond what can be represented numerically.
    #[error("out of numeric range: {0}")]
    Range(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Two routes to the same quantity disagree; this signals a bug.
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid parameters rather than numerics.
    pub fn is_constraint(&self) -> bool {
        matches!(self, Error::Constraint(_) | Error::Domain(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
