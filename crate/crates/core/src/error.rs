use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("column {column} of the kernel sums to {sum}, expected 1")]
    ColumnSum { column: usize, sum: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: partial value {partial}, error bound {error_bound}")]
    Quadrature { partial: f64, error_bound: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{what}: need at least {needed} points, got {got}")]
    TooFewPoints {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable short name of the variant, for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidKernel(_) => "invalid_kernel",
            Error::ColumnSum { .. } => "column_sum",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Quadrature { .. } => "quadrature",
            Error::State(_) => "state",
            Error::Config { .. } => "config",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
