use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank deficient design: {0}")]
    Rank(String),

    #[error("calibration infeasible: {0}")]
    Infeasible(String),

    #[error("improper posterior: {0}")]
    Improper(String),

    #[error("sampler diagnostic failure (acceptance rate {acceptance:.3}): {message}")]
    Sampler { acceptance: f64, message: String },

    #[error("scenario failed: {0}")]
    Scenario(String),

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Csv {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_) | Error::Schema(_) | Error::Csv { .. } => ErrorClass::Validation,
            Error::Degenerate(_)
            | Error::Rank(_)
            | Error::Infeasible(_)
            | Error::Improper(_)
            | Error::Sampler { .. }
            | Error::Scenario(_) => ErrorClass::Numerical,
            Error::Io(_) => ErrorClass::Io,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Degenerate(_) => "degenerate",
            Error::Rank(_) => "rank",
            Error::Infeasible(_) => "infeasible",
            Error::Improper(_) => "improper",
            Error::Sampler { .. } => "sampler",
            Error::Scenario(_) => "scenario",
            Error::Csv { .. } => "csv",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
