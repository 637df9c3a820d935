//! Independent checks that recorded federated runs satisfy the closed-form
//! identities of each attack.
//!
//! Every checker recomputes honest gradients and attacker trajectories from
//! the clients' objectives; nothing here calls into the attack strategies.
//! Feed a checker honest-only records from [`simulate_honest`] to get a
//! negative control that must fail.

mod betrayal;
mod dictator;
mod error;
mod probe;
mod report;
mod sim;

pub use betrayal::{check_betrayal, Betrayal};
pub use dictator::{check_coalition, check_mutual_domination_round2, check_single_dictator, TOLERANCE};
pub use error::OracleError;
pub use probe::{check_probe_dictator, median_eta, ProbeSetup};
pub use report::EquivalenceReport;
pub use sim::{simulate_honest, Evaluators};
