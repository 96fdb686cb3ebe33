use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid; `key` names the offending field.
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    /// A root find, fixed point or optimizer did not converge.
    #[error("solver failure in {context}: {diagnostics}")]
    Solver { context: String, diagnostics: String },

    /// A linear system that must be invertible was not.
    #[error("singular system: {0}")]
    Singular(String),

    /// Inference cannot be carried out (e.g. fewer than two clusters).
    #[error("inference error: {0}")]
    Inference(String),

    /// Data required by an estimator is missing or malformed.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn solver(context: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Solver {
            context: context.into(),
            diagnostics: diagnostics.into(),
        }
    }

    /// True for errors caused by user input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Domain(_) | Error::Json(_) | Error::Data(_)
        )
    }

    /// Prefix the context of a solver error, leaving other kinds untouched.
    pub fn within(self, outer: &str) -> Self {
        match self {
            Error::Solver { context, diagnostics } => Error::Solver {
                context: format!("{outer}: {context}"),
                diagnostics,
            },
            other => other,
        }
    }
}
