use thiserror::Error;

/// Errors raised by scenario loading, linear algebra and the branch analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value violates a type invariant. `field` is a dotted path into the
    /// scenario document where one applies, otherwise the argument name.
    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    #[error("Hilbert-space dimension {requested} exceeds the configured maximum of {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error(
        "theta quadrature is under-resolved: adjacent nodes differ by {max_phase_step:.3} rad of \
         action phase (limit pi/4); use at least {suggested_nodes} nodes"
    )]
    Resolution {
        max_phase_step: f64,
        suggested_nodes: usize,
    },

    #[error("degenerate actions: |lambda_up - lambda_down| = {gap:e} admits no stationary-point selection")]
    Degeneracy { gap: f64 },

    #[error("unsupported coupling profile: {0}")]
    UnsupportedProfile(String),

    #[error("could not parse scenario document: {0}")]
    Parse(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Prefixes the field path of a validation error, used when a nested
    /// component is validated before its parent knows its own path.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::Validation { field, message } => Error::Validation {
                field: format!("{prefix}.{field}"),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
