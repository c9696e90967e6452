use thiserror::Error;

use crate::ba::Policy;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Blahut-Arimoto did not converge after {iterations} iterations (bound gap {gap:e})")]
    NonConvergence {
        iterations: usize,
        gap: f64,
        last: Box<Policy>,
    },

    #[error("product alphabet has {size} points, limit is {limit}")]
    AlphabetTooLarge { size: usize, limit: usize },

    #[error("leakage curve {index} is not convex non-increasing: {reason}")]
    NonConvexCurve { index: usize, reason: String },

    #[error("density segment {segment} has no derivative")]
    MissingDerivative { segment: usize },

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("policy does not match the load model: {0}")]
    PolicyMismatch(String),

    #[error("{count} slots drew an output load above the demand")]
    FeasibilityViolation { count: u64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error behind any added context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
