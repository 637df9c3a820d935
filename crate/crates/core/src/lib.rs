//! Deterministic federated-learning simulation core.
//!
//! Holds the model zoo with analytic gradients, synthetic and IDX data with
//! label partitioning, and the FedSGD round engine that attack strategies plug
//! into.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod protocol;
pub mod rng;

pub use data::{gen_blobs, partition_by_label, DatasetShard, PartitionPlan};
pub use error::{BoxError, DataError, IdxError, ModelError, ProtocolError, VectorError};
pub use gradcheck::fd_check;
pub use model::{init_params, Activation, LossEvaluator, ModelKind, ModelSpec, Objective, Quadratic, Reduction};
pub use params::{add, axpy, inf_distance, scale, sub, sum_of, ClientId, ParamVector, ShapeTag};
pub use protocol::{
    run_rounds, server_step, solo_trajectory, subset_trajectory, ClientMetric, ClientStrategy, HonestClient, Outgoing,
    PeerMessage, ProtocolConfig, RoundRecord, ShadowLogEntry, UpdateMessage,
};
