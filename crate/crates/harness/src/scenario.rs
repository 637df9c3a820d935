//! Turning a validated config into data, clients and a finished run.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dictator_attacks::{
    CheaterClient, CoalitionClient, CoalitionSpec, DictatorClient, EtaSource, ProbeConfig, ProbeDictatorClient,
};
use dictator_core::rng::derive_seed;
use dictator_core::{
    gen_blobs, init_params, partition_by_label, run_rounds, solo_trajectory, subset_trajectory, ClientId, ClientMetric,
    ClientStrategy, DatasetShard, HonestClient, LossEvaluator, ModelKind, ModelSpec, Objective, ParamVector,
    PartitionPlan, Reduction, RoundRecord,
};
use dictator_oracles::{
    check_betrayal, check_coalition, check_mutual_domination_round2, check_probe_dictator, check_single_dictator,
    simulate_honest, Betrayal, EquivalenceReport, Evaluators, ProbeSetup,
};
use serde::Serialize;

use crate::config::{DatasetConfig, RoleConfig, ScenarioConfig, ScenarioKind};
use crate::error::HarnessError;

// Independent streams carved out of the scenario seed.
const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 100;

/// Everything a run needs besides the strategies.
pub struct Prepared {
    pub spec: ModelSpec,
    /// Training objectives, one per client.
    pub train: BTreeMap<ClientId, Arc<LossEvaluator>>,
    /// Held-out evaluators metrics are measured on.
    pub holdout: BTreeMap<ClientId, LossEvaluator>,
    pub theta_0: ParamVector,
}

impl Prepared {
    pub fn evaluators(&self) -> Evaluators {
        self.train
            .iter()
            .map(|(id, ev)| (*id, ev.clone() as Arc<dyn Objective>))
            .collect()
    }
}

pub fn prepare(cfg: &ScenarioConfig, seed: u64) -> Result<Prepared, HarnessError> {
    let data = match &cfg.dataset {
        DatasetConfig::Blobs {
            num_classes,
            dim,
            per_class,
            sigma,
        } => gen_blobs(*num_classes, *dim, *per_class, *sigma, derive_seed(seed, DATA_STREAM))?,
        DatasetConfig::Idx {
            images, labels, limit, ..
        } => load_idx(cfg, images, labels, *limit)?,
    };
    let classes = cfg.dataset.num_classes();
    if data.max_label() >= classes {
        return Err(HarnessError::Invalid(vec![crate::error::Issue::new(
            "dataset.num_classes",
            format!(
                "data has label {} but only {classes} classes are configured",
                data.max_label()
            ),
        )]));
    }
    let table = cfg.label_table().ok_or_else(|| HarnessError::Invalid(cfg.validate()))?;
    let shards = partition_by_label(&data, &PartitionPlan::new(table)?)?;
    let spec = match cfg.model.kind {
        ModelKind::LinearSoftmax => ModelSpec::linear(data.dim(), classes),
        ModelKind::Mlp1 => ModelSpec::mlp(
            data.dim(),
            cfg.model.hidden_dim.unwrap_or(0),
            classes,
            cfg.model.activation,
        ),
    };
    let mut train = BTreeMap::new();
    let mut holdout = BTreeMap::new();
    for (id, shard) in shards {
        let (tr, te) = shard.split_holdout(cfg.holdout_fraction, derive_seed(seed, SPLIT_STREAM + id.0 as u64))?;
        train.insert(id, Arc::new(LossEvaluator::new(spec, Arc::new(tr), Reduction::Mean)?));
        holdout.insert(id, LossEvaluator::new(spec, Arc::new(te), Reduction::Mean)?);
    }
    Ok(Prepared {
        spec,
        train,
        holdout,
        theta_0: init_params(&spec, derive_seed(seed, INIT_STREAM))?,
    })
}

fn load_idx(
    cfg: &ScenarioConfig,
    images: &std::path::Path,
    labels: &std::path::Path,
    limit: usize,
) -> Result<DatasetShard, HarnessError> {
    Ok(dictator_core::data::idx::load_idx(
        cfg.base_dir.join(images),
        cfg.base_dir.join(labels),
        limit,
    )?)
}

/// Probe size for `role`: the fixed magnitude, or `relative` times the median
/// absolute coordinate of the client's gradient at `θ_0`.
pub fn probe_magnitude(role: &RoleConfig, own: &dyn Objective, theta_0: &ParamVector) -> Result<f64, HarnessError> {
    let RoleConfig::Probe {
        magnitude, relative, ..
    } = role
    else {
        unreachable!("probe_magnitude on a non-probe role");
    };
    if let Some(b) = magnitude {
        return Ok(*b);
    }
    let scale = relative.expect("validated: one of magnitude or relative");
    let mut mags: Vec<f64> = own.gradient(theta_0)?.values().iter().map(|g| g.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    if median.is_nan() || median <= 0.0 {
        return Err(HarnessError::Invalid(vec![crate::error::Issue::new(
            "roles.probe.relative",
            "median gradient magnitude is zero; give an absolute magnitude",
        )]));
    }
    Ok(scale * median)
}

fn build_clients(
    cfg: &ScenarioConfig,
    roles: &BTreeMap<ClientId, RoleConfig>,
    prep: &Prepared,
) -> Result<Vec<Box<dyn ClientStrategy>>, HarnessError> {
    let n = cfg.protocol.num_clients;
    let eta = EtaSource::Known(cfg.protocol.eta);
    roles
        .iter()
        .map(|(id, role)| {
            let obj: Arc<dyn Objective> = prep.train[id].clone();
            Ok(match role {
                RoleConfig::Honest {} => Box::new(HonestClient::new(*id, obj)) as Box<dyn ClientStrategy>,
                RoleConfig::Dictator {} => Box::new(DictatorClient::new(*id, obj, eta)),
                RoleConfig::Coalition { members } => {
                    let spec = CoalitionSpec::new(members.iter().map(|m| ClientId(*m)), n)?;
                    Box::new(CoalitionClient::new(*id, spec, obj, eta)?)
                }
                RoleConfig::Cheater {
                    partner,
                    betrayal_round,
                } => Box::new(CheaterClient::new(
                    *id,
                    ClientId(*partner),
                    n,
                    obj,
                    eta,
                    *betrayal_round,
                )?),
                RoleConfig::Probe { known_eta, .. } => {
                    let b = probe_magnitude(role, obj.as_ref(), &prep.theta_0)?;
                    let mut c = ProbeDictatorClient::new(*id, obj, ProbeConfig::new(b))?;
                    if *known_eta {
                        c = c.with_known_eta(cfg.protocol.eta);
                    }
                    Box::new(c)
                }
            })
        })
        .collect()
}

/// Per-round, per-client held-out metrics, measured after each update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub clients: Vec<ClientId>,
    /// `rows[t][j]` describes client `clients[j]` after round `t + 1`.
    pub rows: Vec<Vec<ClientMetric>>,
}

impl MetricsTable {
    fn from_records(records: &[RoundRecord]) -> Self {
        let clients = records
            .first()
            .map(|r| r.per_client_metrics.iter().map(|(id, _)| *id).collect())
            .unwrap_or_default();
        let rows = records
            .iter()
            .map(|r| r.per_client_metrics.iter().map(|(_, m)| *m).collect())
            .collect();
        MetricsTable { clients, rows }
    }

    /// Final accuracy per client, as a fraction.
    pub fn final_accuracy(&self) -> Vec<(ClientId, f64)> {
        match self.rows.last() {
            Some(row) => self
                .clients
                .iter()
                .copied()
                .zip(row.iter().map(|m| m.accuracy))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Held-out loss of `client` after round `round` (1-based).
    pub fn loss(&self, round: usize, client: ClientId) -> Option<f64> {
        let j = self.clients.iter().position(|c| *c == client)?;
        Some(self.rows.get(round.checked_sub(1)?)?[j].loss)
    }
}

/// A checker verdict on the attacked run and on its honest-only control.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: EquivalenceReport,
    pub negative_control: EquivalenceReport,
}

impl CheckOutcome {
    /// The attack identity holds and the control does not.
    pub fn ok(&self) -> bool {
        self.check.passed && !self.negative_control.passed
    }
}

pub struct RunOutput {
    pub seed: u64,
    pub table: MetricsTable,
    pub records: Vec<RoundRecord>,
    pub checks: Vec<CheckOutcome>,
}

impl RunOutput {
    pub fn all_checks_ok(&self) -> bool {
        self.checks.iter().all(CheckOutcome::ok)
    }
}

/// Runs the scenario once with `seed` and evaluates its equivalence checks.
pub fn execute(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    let prep = prepare(cfg, seed)?;
    let roles = cfg.resolved_roles();
    let mut clients = build_clients(cfg, &roles, &prep)?;
    let records = run_rounds(&cfg.protocol, &mut clients, prep.theta_0.clone(), &prep.holdout)?;
    let checks = run_checks(cfg, &roles, &prep, &records, &clients)?;
    Ok(RunOutput {
        seed,
        table: MetricsTable::from_records(&records),
        records,
        checks,
    })
}

fn attackers(roles: &BTreeMap<ClientId, RoleConfig>) -> impl Iterator<Item = (ClientId, &RoleConfig)> {
    roles
        .iter()
        .filter(|(_, r)| !matches!(r, RoleConfig::Honest {}))
        .map(|(id, r)| (*id, r))
}

fn run_checks(
    cfg: &ScenarioConfig,
    roles: &BTreeMap<ClientId, RoleConfig>,
    prep: &Prepared,
    records: &[RoundRecord],
    clients: &[Box<dyn ClientStrategy>],
) -> Result<Vec<CheckOutcome>, HarnessError> {
    let eta = cfg.protocol.eta;
    let rounds = cfg.protocol.rounds;
    let evs = prep.evaluators();
    let honest = simulate_honest(&evs, &prep.theta_0, eta, rounds)?;
    let both = |check: EquivalenceReport, negative_control: EquivalenceReport| {
        vec![CheckOutcome {
            check,
            negative_control,
        }]
    };
    Ok(match cfg.scenario_kind {
        ScenarioKind::Regular => Vec::new(),
        ScenarioKind::SingleDictator => {
            let (m, role) = attackers(roles).next().expect("validated: one attacker");
            match role {
                RoleConfig::Probe { known_eta, .. } => {
                    let mut plain_roles = roles.clone();
                    plain_roles.insert(m, RoleConfig::Dictator {});
                    let mut plain_clients = build_clients(cfg, &plain_roles, prep)?;
                    let plain = run_rounds(
                        &cfg.protocol,
                        &mut plain_clients,
                        prep.theta_0.clone(),
                        &BTreeMap::new(),
                    )?;
                    let setup = ProbeSetup {
                        client: m,
                        magnitude: probe_magnitude(role, evs[&m].as_ref(), &prep.theta_0)?,
                        known_eta: known_eta.then_some(eta),
                    };
                    both(
                        check_probe_dictator(records, &plain, &evs, eta, setup)?,
                        check_probe_dictator(&honest, &plain, &evs, eta, setup)?,
                    )
                }
                _ => {
                    let solo = solo_trajectory(evs[&m].as_ref(), &prep.theta_0, eta, rounds)?;
                    both(
                        check_single_dictator(records, &solo, &evs, eta, m)?,
                        check_single_dictator(&honest, &solo, &evs, eta, m)?,
                    )
                }
            }
        }
        ScenarioKind::Coalition => {
            let members: BTreeSet<ClientId> = attackers(roles).map(|(id, _)| id).collect();
            let joint: Vec<(ClientId, &dyn Objective)> = members.iter().map(|id| (*id, evs[id].as_ref())).collect();
            let traj = subset_trajectory(&joint, &prep.theta_0, eta, rounds)?;
            both(
                check_coalition(records, &traj, &evs, eta, &members)?,
                check_coalition(&honest, &traj, &evs, eta, &members)?,
            )
        }
        ScenarioKind::MutualDomination => both(
            check_mutual_domination_round2(&prep.theta_0, &records[1].theta_after, &evs, eta)?,
            check_mutual_domination_round2(&prep.theta_0, &honest[1].theta_after, &evs, eta)?,
        ),
        ScenarioKind::Betrayal => {
            let (cheater, partner, round) = attackers(roles)
                .find_map(|(id, r)| match r {
                    RoleConfig::Cheater {
                        partner,
                        betrayal_round,
                    } => Some((id, ClientId(*partner), *betrayal_round)),
                    _ => None,
                })
                .expect("validated: one cheater");
            let b = Betrayal {
                cheater,
                partner,
                round,
            };
            let log = clients.iter().find(|c| c.id() == cheater).and_then(|c| c.shadow_log());
            both(
                check_betrayal(records, log, &evs, eta, b)?,
                check_betrayal(&honest, None, &evs, eta, b)?,
            )
        }
    })
}
