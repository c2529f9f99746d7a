use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation failed in {context} at x = {x:?}")]
    Evaluation { context: &'static str, x: DVector<f64> },

    #[error("evaluation failed in {context} at node {node}: {source}")]
    NodeEvaluation {
        context: &'static str,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("simulation diverged (non-finite state) at step {step}")]
    Divergence { step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_node(self, context: &'static str, node: usize) -> Error {
        Error::NodeEvaluation { context, node, source: Box::new(self) }
    }
}
