use dictator_core::{ClientId, ModelError, VectorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("learning rate must be positive and finite, got {0}")]
    BadEta(f64),
    #[error("shadow is at round {shadow} but the server is at round {round}")]
    RoundGap { shadow: usize, round: usize },
    #[error("invalid coalition: {0}")]
    InvalidCoalition(String),
    #[error("round {round}: no gradient received from peer {peer}")]
    MissingPeerGradient { round: usize, peer: ClientId },
    #[error("round {round}: peer {peer} shadow differs from ours")]
    Desynchronized { round: usize, peer: ClientId },
    #[error("round {round}: unexpected mail from {from}")]
    UnexpectedMail { round: usize, from: ClientId },
    #[error("betrayal round must be at least 2, got {0}")]
    BetrayalTooEarly(usize),
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}
