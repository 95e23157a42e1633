use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Out-degree at or below the positivity threshold somewhere on the grid.
    #[error("out-degree {value:e} at x = {x} is not bounded away from zero")]
    Degeneracy { x: f64, value: f64 },

    #[error("operation requires a symmetric graphon")]
    Symmetry,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix factorization failed: {0}")]
    SingularMatrix(String),

    #[error("eigensolver did not converge: {0}")]
    Convergence(String),

    #[error("eigenvalue {value:e} of the forward-backward matrix at index {index} is too small to define a singular triple")]
    Rank { index: usize, value: f64 },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Symmetry => 2,
            Error::Domain(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Degeneracy { .. }
            | Error::SingularMatrix(_)
            | Error::Convergence(_)
            | Error::Rank { .. }
            | Error::EmptyCluster(_) => 4,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
