use dictator_core::{ClientId, ModelError, ProtocolError, VectorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{what}: expected {expected} entries, got {got}")]
    TrajectoryLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no evaluator for client {0}")]
    MissingEvaluator(ClientId),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
