use thiserror::Error;

use crate::topology::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error(
        "no connected graph with n={n}, avg_degree={avg_degree} after {attempts} attempts (network too sparse)"
    )]
    InfeasibleSparsity {
        n: usize,
        avg_degree: f64,
        attempts: u32,
    },

    #[error("malformed input at `{field}`: {reason}")]
    Parse { field: String, reason: String },

    #[error("node {node} is out of range for a graph of {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },

    #[error("no physical path from {from} to {to}")]
    Unreachable { from: NodeId, to: NodeId },

    #[error("data transfer can only be recorded for a successful connection")]
    ConnectionNotEstablished,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
