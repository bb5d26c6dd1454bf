use std::path::PathBuf;

/// Errors raised by measure construction, lattice queries and the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A constructor or generator received an out-of-range parameter.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    /// The inputs are well formed but the operation is undefined on them
    /// (zero mass cube, empty window, non-orthonormal basis, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A combinatorial search exceeded its configured candidate budget.
    #[error("capacity exceeded: {what} has {count} candidates (cap {cap})")]
    Capacity {
        what: String,
        count: usize,
        cap: usize,
    },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
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
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
