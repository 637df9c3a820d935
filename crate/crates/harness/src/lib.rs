//! Declarative runner for dictator-attack scenarios.
//!
//! A scenario file names the data, model, partition, protocol and each
//! client's role. [`run_scenario`] executes it, checks the attack's update
//! identities with an honest-only negative control, and writes
//! `curves.csv`, `accuracy.json`, `checks.json` and `stamp.json`.

pub mod config;
mod error;
pub mod output;
pub mod scenario;

pub use config::{compose_mutual_domination, parse_config, parse_config_str, RoleConfig, ScenarioConfig, ScenarioKind};
pub use error::{HarnessError, Issue};
pub use output::{output_dir, run_multi_seed, run_scenario, SigmaTable};
pub use scenario::{execute, prepare, CheckOutcome, MetricsTable, Prepared, RunOutput};
