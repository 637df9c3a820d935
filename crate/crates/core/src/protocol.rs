//! The FedSGD round engine.
//!
//! Each round the server broadcasts `θ_t`, collects exactly one update per
//! client, delivers coalition mail, and applies `θ_{t+1} = θ_t − η Σ_n U_n`
//! with the sum taken in ascending client-id order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BoxError, ModelError, ProtocolError};
use crate::model::{LossEvaluator, Objective};
use crate::params::{axpy, sum_of, ClientId, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Server learning rate η.
    pub eta: f64,
    /// Number of server updates to run.
    pub rounds: usize,
    pub num_clients: usize,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(ProtocolError::InvalidConfig(format!(
                "eta must be a positive finite number, got {}",
                self.eta
            )));
        }
        if self.rounds == 0 {
            return Err(ProtocolError::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.num_clients < 2 {
            return Err(ProtocolError::InvalidConfig(format!(
                "need at least 2 clients, got {}",
                self.num_clients
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMessage {
    pub client_id: ClientId,
    pub round: usize,
    pub update: ParamVector,
}

/// Coalition mail: a member's gradient at the shared shadow model.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerMessage {
    pub from: ClientId,
    pub to: ClientId,
    pub round: usize,
    pub gradient: ParamVector,
    /// Fingerprint of the sender's shadow model the gradient was taken at.
    pub shadow_fingerprint: u64,
}

/// What a client hands back after a broadcast.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub update: ParamVector,
    pub peer_messages: Vec<PeerMessage>,
}

impl Outgoing {
    pub fn update(update: ParamVector) -> Self {
        Outgoing {
            update,
            peer_messages: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientMetric {
    pub loss: f64,
    /// Fraction in `[0, 1]`.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub theta_before: ParamVector,
    /// Sorted by client id.
    pub updates: Vec<UpdateMessage>,
    pub theta_after: ParamVector,
    /// Metrics of `theta_after`, in client-id order. Empty when no held-out evaluators were given.
    pub per_client_metrics: Vec<(ClientId, ClientMetric)>,
}

impl RoundRecord {
    pub fn update_of(&self, client: ClientId) -> Option<&ParamVector> {
        self.updates.iter().find(|u| u.client_id == client).map(|u| &u.update)
    }

    /// Re-applies the server rule to the stored inputs.
    pub fn recompute(&self, eta: f64) -> Result<ParamVector, ProtocolError> {
        server_step(&self.theta_before, &self.updates, eta)
    }
}

/// One logged attacker state, taken after the round's mail was processed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowLogEntry {
    pub round: usize,
    /// Shadow model for the next round, `θ̂_{t+1}` (solo or coalition).
    pub shadow: ParamVector,
    /// Private solo model kept alongside a coalition shadow, `θ̂¹_{t+1}`.
    pub secret: Option<ParamVector>,
    /// Running betrayal offset after this round.
    pub accumulator: Option<ParamVector>,
}

/// A participant in the protocol.
///
/// Strategies own all of their private state. The only channel between
/// strategies is [`PeerMessage`] mail, delivered by the engine after every
/// update for the round has been collected.
pub trait ClientStrategy: Send {
    fn id(&self) -> ClientId;

    /// Short role name for diagnostics.
    fn role(&self) -> &'static str;

    /// Clients this strategy may send mail to.
    fn peers(&self) -> &[ClientId] {
        &[]
    }

    fn on_broadcast(&mut self, round: usize, theta: &ParamVector) -> Result<Outgoing, BoxError>;

    fn on_peer_messages(&mut self, _round: usize, inbox: &[PeerMessage]) -> Result<(), BoxError> {
        if let Some(m) = inbox.first() {
            return Err(format!("client {} does not accept mail (from {})", self.id(), m.from).into());
        }
        Ok(())
    }

    fn shadow_log(&self) -> Option<&[ShadowLogEntry]> {
        None
    }
}

/// Sends its true full-batch gradient every round.
pub struct HonestClient {
    id: ClientId,
    objective: Arc<dyn Objective>,
}

impl HonestClient {
    pub fn new(id: ClientId, objective: Arc<dyn Objective>) -> Self {
        HonestClient { id, objective }
    }
}

impl ClientStrategy for HonestClient {
    fn id(&self) -> ClientId {
        self.id
    }

    fn role(&self) -> &'static str {
        "honest"
    }

    fn on_broadcast(&mut self, _round: usize, theta: &ParamVector) -> Result<Outgoing, BoxError> {
        Ok(Outgoing::update(self.objective.gradient(theta)?))
    }
}

/// `θ_t − η Σ updates`, summed in ascending client-id order.
///
/// Client ids must be exactly `1..=updates.len()`.
pub fn server_step(theta: &ParamVector, updates: &[UpdateMessage], eta: f64) -> Result<ParamVector, ProtocolError> {
    let round = updates.first().map_or(0, |u| u.round);
    let mut ids: Vec<ClientId> = updates.iter().map(|u| u.client_id).collect();
    ids.sort();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            return Err(ProtocolError::DuplicateClient { round, client: w[0] });
        }
    }
    for (expected, &got) in (1..).map(ClientId).zip(&ids) {
        if got != expected {
            return Err(if got.0 > expected.0 {
                ProtocolError::MissingClient {
                    round,
                    client: expected,
                }
            } else {
                ProtocolError::UnknownClient { round, client: got }
            });
        }
    }
    if ids.is_empty() {
        return Err(ProtocolError::MissingClient {
            round,
            client: ClientId(1),
        });
    }
    for u in updates {
        if u.update.len() != theta.len() {
            return Err(ProtocolError::UpdateLength {
                round,
                client: u.client_id,
                expected: theta.len(),
                got: u.update.len(),
            });
        }
    }
    let items: Vec<(ClientId, &ParamVector)> = updates.iter().map(|u| (u.client_id, &u.update)).collect();
    let total = sum_of(&items)?;
    Ok(axpy(-eta, &total, theta)?)
}

/// Runs `config.rounds` rounds starting from `theta_0`.
///
/// `holdout` maps each client to the evaluator its metrics are measured on; pass
/// an empty map to skip metrics. Metrics describe the model after the round's update.
pub fn run_rounds(
    config: &ProtocolConfig,
    clients: &mut [Box<dyn ClientStrategy>],
    theta_0: ParamVector,
    holdout: &BTreeMap<ClientId, LossEvaluator>,
) -> Result<Vec<RoundRecord>, ProtocolError> {
    config.validate()?;
    if clients.len() != config.num_clients {
        return Err(ProtocolError::InvalidConfig(format!(
            "config declares {} clients but {} strategies were supplied",
            config.num_clients,
            clients.len()
        )));
    }
    clients.sort_by_key(|c| c.id());
    for (expected, c) in (1..).map(ClientId).zip(clients.iter()) {
        if c.id() != expected {
            return Err(ProtocolError::InvalidConfig(format!(
                "client ids must be 1..={}; found {} where {} was expected",
                config.num_clients,
                c.id(),
                expected
            )));
        }
    }
    if !holdout.is_empty() {
        if let Some(c) = clients.iter().find(|c| !holdout.contains_key(&c.id())) {
            return Err(ProtocolError::InvalidConfig(format!(
                "no held-out evaluator for client {}",
                c.id()
            )));
        }
    }

    let mut theta = theta_0;
    let mut records = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let outgoing: Vec<Result<Outgoing, ProtocolError>> = clients
            .par_iter_mut()
            .map(|c| {
                let id = c.id();
                c.on_broadcast(round, &theta).map_err(|source| ProtocolError::Strategy {
                    round,
                    client: id,
                    source,
                })
            })
            .collect();

        let mut updates = Vec::with_capacity(clients.len());
        let mut mailboxes: BTreeMap<ClientId, Vec<PeerMessage>> = BTreeMap::new();
        for (c, out) in clients.iter().zip(outgoing) {
            let out = out?;
            let id = c.id();
            if out.update.len() != theta.len() {
                return Err(ProtocolError::UpdateLength {
                    round,
                    client: id,
                    expected: theta.len(),
                    got: out.update.len(),
                });
            }
            if !out.update.is_finite() {
                return Err(ProtocolError::NonFiniteUpdate { round, client: id });
            }
            for msg in out.peer_messages {
                if msg.from != id || !c.peers().contains(&msg.to) {
                    return Err(ProtocolError::UndeclaredPeer {
                        round,
                        from: id,
                        to: msg.to,
                    });
                }
                mailboxes.entry(msg.to).or_default().push(msg);
            }
            updates.push(UpdateMessage {
                client_id: id,
                round,
                update: out.update,
            });
        }

        for c in clients.iter_mut() {
            let inbox = mailboxes.remove(&c.id()).unwrap_or_default();
            if inbox.is_empty() && c.peers().is_empty() {
                continue;
            }
            let id = c.id();
            c.on_peer_messages(round, &inbox)
                .map_err(|source| ProtocolError::Strategy {
                    round,
                    client: id,
                    source,
                })?;
        }

        let next = server_step(&theta, &updates, config.eta)?;
        let per_client_metrics = measure(holdout, &next)?;
        records.push(RoundRecord {
            round,
            theta_before: std::mem::replace(&mut theta, next.clone()),
            updates,
            theta_after: next,
            per_client_metrics,
        });
    }
    Ok(records)
}

fn measure(
    holdout: &BTreeMap<ClientId, LossEvaluator>,
    theta: &ParamVector,
) -> Result<Vec<(ClientId, ClientMetric)>, ProtocolError> {
    holdout
        .par_iter()
        .map(|(&client, ev)| {
            let metric = (|| -> Result<ClientMetric, ModelError> {
                Ok(ClientMetric {
                    loss: ev.loss(theta)?,
                    accuracy: ev.accuracy(theta)?,
                })
            })();
            metric
                .map(|m| (client, m))
                .map_err(|source| ProtocolError::Metrics { client, source })
        })
        .collect()
}

/// The model one client would reach training alone: `θ̂_{t+1} = θ̂_t − η ∇L(θ̂_t)`.
///
/// Returns `steps + 1` iterates, starting with `theta_0`.
pub fn solo_trajectory(
    objective: &dyn Objective,
    theta_0: &ParamVector,
    eta: f64,
    steps: usize,
) -> Result<Vec<ParamVector>, ProtocolError> {
    if steps == 0 {
        return Err(ProtocolError::InvalidConfig(
            "trajectory needs at least one step".into(),
        ));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(theta_0.clone());
    for _ in 0..steps {
        let last = out.last().expect("non-empty");
        let g = objective.gradient(last)?;
        out.push(axpy(-eta, &g, last)?);
    }
    Ok(out)
}

/// The model a subset of clients would reach training without anyone else:
/// `θ̂_{t+1} = θ̂_t − η Σ_k ∇L_k(θ̂_t)`, the sum in ascending client-id order.
pub fn subset_trajectory(
    members: &[(ClientId, &dyn Objective)],
    theta_0: &ParamVector,
    eta: f64,
    steps: usize,
) -> Result<Vec<ParamVector>, ProtocolError> {
    if members.len() < 2 {
        return Err(ProtocolError::InvalidConfig(format!(
            "a subset trajectory needs at least two members, got {}",
            members.len()
        )));
    }
    if steps == 0 {
        return Err(ProtocolError::InvalidConfig(
            "trajectory needs at least one step".into(),
        ));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(theta_0.clone());
    for _ in 0..steps {
        let last = out.last().expect("non-empty");
        let grads = members
            .iter()
            .map(|(id, obj)| Ok((*id, obj.gradient(last)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let refs: Vec<(ClientId, &ParamVector)> = grads.iter().map(|(id, g)| (*id, g)).collect();
        let total = sum_of(&refs)?;
        out.push(axpy(-eta, &total, last)?);
    }
    Ok(out)
}
