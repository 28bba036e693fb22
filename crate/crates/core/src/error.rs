use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model not found: {}", .0.display())]
    ModelNotFound(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("rank deficient {what}: rank {rank} < {required}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        required: usize,
    },

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("QP infeasible: constraint {constraint} violated by {violation:.3e}")]
    QpInfeasible { constraint: usize, violation: f64 },

    #[error("QP did not converge within {0} iterations")]
    QpMaxIterations(usize),

    #[error("simulation diverged at t = {time:.4} s: {reason}")]
    Divergence { time: f64, reason: String },

    #[error("at t = {time:.4} s: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("run logs are not comparable: {0}")]
    Comparison(String),
}

impl Error {
    /// Attach a simulation timestamp unless one is already present.
    pub fn at(self, time: f64) -> Self {
        match self {
            e @ (Error::AtTime { .. } | Error::Divergence { .. }) => e,
            e => Error::AtTime {
                time,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping timestamp wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }
}
