use crate::tree::NodeStatus;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A node id that does not exist in the tree.
    #[error("unknown node id {0}")]
    UnknownNode(usize),

    /// An operation that is illegal for the node's current status.
    #[error("node {id} has status {status:?} and cannot be modified this way")]
    Lifecycle { id: usize, status: NodeStatus },

    /// A document failed structural validation on load.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// An evaluator hook returned a value outside [0, 1].
    #[error("evaluator hook returned {value}, outside [0, 1]")]
    EvaluatorRange { value: f64 },

    /// A model query failed; the offending path is attached.
    #[error("model query failed for path {path:?}: {message}")]
    ModelQuery { path: Vec<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
