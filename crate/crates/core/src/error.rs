use thiserror::Error;

use crate::params::ClientId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("vector shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },
    #[error("client {0} appears more than once")]
    DuplicateClient(ClientId),
    #[error("cannot sum an empty list of vectors")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("parameter vector has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shard has feature dimension {got}, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("dataset shard is empty")]
    EmptyShard,
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),
    #[error("shard must contain at least one row")]
    EmptyShard,
    #[error("features hold {features} values, not a multiple of {rows} rows x {dim}")]
    RaggedFeatures { features: usize, rows: usize, dim: usize },
    #[error("label {0} is not assigned to any client")]
    UncoveredLabel(usize),
    #[error("label {label} assigned to both client {first} and client {second}")]
    OverlappingLabel {
        label: usize,
        first: ClientId,
        second: ClientId,
    },
    #[error("client {0} receives no rows")]
    EmptyClientShard(ClientId),
    #[error(transparent)]
    Idx(#[from] IdxError),
}

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX file truncated: header promises {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX dimensions overflow")]
    Overflow,
    #[error("image file has {images} items but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("row limit must be at least 1")]
    ZeroLimit,
    #[error("IDX file declares zero items")]
    NoItems,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type BoxError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid protocol config: {0}")]
    InvalidConfig(String),
    #[error("round {round}: client {client} missing from the update set")]
    MissingClient { round: usize, client: ClientId },
    #[error("round {round}: duplicate update from client {client}")]
    DuplicateClient { round: usize, client: ClientId },
    #[error("round {round}: unexpected client {client}")]
    UnknownClient { round: usize, client: ClientId },
    #[error("round {round}: client {client} sent an update for round {claimed}")]
    WrongRound {
        round: usize,
        client: ClientId,
        claimed: usize,
    },
    #[error("round {round}: client {client} update has length {got}, model has {expected}")]
    UpdateLength {
        round: usize,
        client: ClientId,
        expected: usize,
        got: usize,
    },
    #[error("round {round}: client {client} produced a non-finite update")]
    NonFiniteUpdate { round: usize, client: ClientId },
    #[error("round {round}: client {from} messaged {to}, which is not a declared peer")]
    UndeclaredPeer { round: usize, from: ClientId, to: ClientId },
    #[error("round {round}: client {client} strategy failed: {source}")]
    Strategy {
        round: usize,
        client: ClientId,
        #[source]
        source: BoxError,
    },
    #[error("metric evaluation failed for client {client}: {source}")]
    Metrics {
        client: ClientId,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vector(#[from] VectorError),
}
