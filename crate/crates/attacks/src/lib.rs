//! Adversarial client strategies for the FedSGD engine.
//!
//! * [`DictatorClient`]: a single client that steers the global model onto the
//!   trajectory it would follow if it trained alone.
//! * [`CoalitionClient`]: several clients doing the same jointly over a shared
//!   shadow model.
//! * [`CheaterClient`]: a coalition member that later betrays its partner.
//! * [`ProbeDictatorClient`]: a dictator that first recovers the server
//!   learning rate with one oversized update.
//!
//! [`compose_mutual_domination`] makes every client a dictator at once.

mod cheater;
mod coalition;
mod dictator;
mod error;
mod probe;
mod shadow;

pub use cheater::{cheater_absorb, cheater_update, CheatMove, CheatState, CheaterClient};
pub use coalition::{advance_coalition, coalition_update, CoalitionClient, CoalitionMove, CoalitionSpec};
pub use dictator::{compose_mutual_domination, dictator_update, DictatorClient};
pub use error::AttackError;
pub use probe::{estimate_eta, ProbeConfig, ProbeDictatorClient};
pub use shadow::{EtaSource, ShadowKind, ShadowState};
