use thiserror::Error;

/// Grid node as `(i, j)`, `i` along x and `j` along y.
pub type Node = (usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("geometry error at node {node:?}: {msg}")]
    Geometry { node: Node, msg: String },

    #[error("inadmissible field: smallest eigenvalue {margin:e} at node {node:?}")]
    Admissibility { node: Node, margin: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("newton did not converge at t = {t}: {reason}")]
    NonConvergence { t: f64, reason: String },

    #[error("homotopy failed: step underflow after last accepted t = {last_t}")]
    HomotopyFailure { last_t: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("config error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// True for failures the homotopy recovers from by shrinking its step.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Admissibility { .. }
        )
    }
}
