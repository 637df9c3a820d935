//! Collaborative dictators: a coalition shares gradients over a side channel
//! and jointly erases every non-member's contribution.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use dictator_core::{
    sum_of, BoxError, ClientId, ClientStrategy, Objective, Outgoing, ParamVector, PeerMessage, ShadowLogEntry,
    UpdateMessage,
};

use crate::error::AttackError;
use crate::shadow::{crafted_update, EtaSource, ShadowKind, ShadowState};

/// The colluding set `𝒫`, `1 < |𝒫| < N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionSpec {
    members: BTreeSet<ClientId>,
}

impl CoalitionSpec {
    pub fn new(members: impl IntoIterator<Item = ClientId>, num_clients: usize) -> Result<Self, AttackError> {
        let members: BTreeSet<ClientId> = members.into_iter().collect();
        if members.len() < 2 || members.len() >= num_clients {
            return Err(AttackError::InvalidCoalition(format!(
                "coalition size {} must satisfy 1 < P < N = {num_clients}",
                members.len()
            )));
        }
        if let Some(bad) = members.iter().find(|id| id.0 == 0 || id.0 as usize > num_clients) {
            return Err(AttackError::InvalidCoalition(format!(
                "member {bad} outside 1..={num_clients}"
            )));
        }
        Ok(CoalitionSpec { members })
    }

    pub fn members(&self) -> &BTreeSet<ClientId> {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, id: ClientId) -> bool {
        self.members.contains(&id)
    }
}

/// A member's output for one round: the server update and the gradient to share.
#[derive(Debug, Clone)]
pub struct CoalitionMove {
    pub update: UpdateMessage,
    /// `∇L_k(θ̂^P_t)`, to be mailed to every other member.
    pub shared: ParamVector,
}

/// One round of the collaborative attack for member `k`.
///
/// Round 0 sends `∇L_k(θ_0)`. Later rounds send
/// `M^k_t = ∇L_k(θ̂^P_t) − ((θ̂^P_{t−1} − θ_t)/(Pη) − ∇L_k(θ̂^P_{t−1}))`.
/// The shadow is not advanced here; that waits for the peers' gradients
/// (see [`advance_coalition`]).
pub fn coalition_update(
    k: ClientId,
    coalition: &CoalitionSpec,
    round: usize,
    theta_t: &ParamVector,
    shadow: &ShadowState,
    objective: &dyn Objective,
    eta: EtaSource,
) -> Result<CoalitionMove, AttackError> {
    let eta = eta.checked()?;
    if !coalition.contains(k) {
        return Err(AttackError::InvalidCoalition(format!("{k} is not a member")));
    }
    shadow.expect_round(round)?;
    let grad = objective.gradient(&shadow.current)?;
    let update = match (&shadow.previous, &shadow.previous_grad) {
        (Some(prev), Some(prev_grad)) => {
            crafted_update(&grad, prev, prev_grad, theta_t, coalition.size() as f64 * eta)?
        }
        _ => grad.clone(),
    };
    Ok(CoalitionMove {
        update: UpdateMessage {
            client_id: k,
            round,
            update,
        },
        shared: grad,
    })
}

/// `θ̂^P_{t+1} = θ̂^P_t − η Σ_{k∈𝒫} ∇L_k(θ̂^P_t)`, summed in ascending id order.
///
/// `gradients` must hold exactly one entry per member, including `own`.
pub fn advance_coalition(
    shadow: &ShadowState,
    coalition: &CoalitionSpec,
    own: ClientId,
    gradients: &BTreeMap<ClientId, ParamVector>,
    eta: EtaSource,
) -> Result<ShadowState, AttackError> {
    let eta = eta.checked()?;
    for &m in coalition.members() {
        if !gradients.contains_key(&m) {
            return Err(AttackError::MissingPeerGradient {
                round: shadow.round,
                peer: m,
            });
        }
    }
    if let Some(extra) = gradients.keys().find(|id| !coalition.contains(**id)) {
        return Err(AttackError::UnexpectedMail {
            round: shadow.round,
            from: *extra,
        });
    }
    let items: Vec<(ClientId, &ParamVector)> = gradients.iter().map(|(id, g)| (*id, g)).collect();
    let total = sum_of(&items)?;
    shadow.advance(&total, gradients[&own].clone(), eta)
}

/// Checks an inbox against the coalition and collects the shared gradients.
pub(crate) fn collect_peer_gradients(
    coalition: &CoalitionSpec,
    me: ClientId,
    round: usize,
    shadow: &ShadowState,
    inbox: &[PeerMessage],
) -> Result<BTreeMap<ClientId, ParamVector>, AttackError> {
    let expect = shadow.current.fingerprint();
    let mut grads = BTreeMap::new();
    for msg in inbox {
        if msg.round != round || !coalition.contains(msg.from) || msg.from == me {
            return Err(AttackError::UnexpectedMail { round, from: msg.from });
        }
        if msg.shadow_fingerprint != expect {
            return Err(AttackError::Desynchronized { round, peer: msg.from });
        }
        if grads.insert(msg.from, msg.gradient.clone()).is_some() {
            return Err(AttackError::UnexpectedMail { round, from: msg.from });
        }
    }
    for &peer in coalition.members() {
        if peer != me && !grads.contains_key(&peer) {
            return Err(AttackError::MissingPeerGradient { round, peer });
        }
    }
    Ok(grads)
}

pub(crate) fn mail(
    coalition: &CoalitionSpec,
    me: ClientId,
    round: usize,
    shadow: &ShadowState,
    grad: &ParamVector,
) -> Vec<PeerMessage> {
    let fingerprint = shadow.current.fingerprint();
    coalition
        .members()
        .iter()
        .filter(|&&p| p != me)
        .map(|&to| PeerMessage {
            from: me,
            to,
            round,
            gradient: grad.clone(),
            shadow_fingerprint: fingerprint,
        })
        .collect()
}

/// A coalition member following the collaborative protocol.
pub struct CoalitionClient {
    id: ClientId,
    coalition: CoalitionSpec,
    peers: Vec<ClientId>,
    objective: Arc<dyn Objective>,
    eta: EtaSource,
    shadow: Option<ShadowState>,
    pending: Option<ParamVector>,
    log: Vec<ShadowLogEntry>,
}

impl CoalitionClient {
    pub fn new(
        id: ClientId,
        coalition: CoalitionSpec,
        objective: Arc<dyn Objective>,
        eta: EtaSource,
    ) -> Result<Self, AttackError> {
        if !coalition.contains(id) {
            return Err(AttackError::InvalidCoalition(format!("{id} is not a member")));
        }
        let peers = coalition.members().iter().copied().filter(|&p| p != id).collect();
        Ok(CoalitionClient {
            id,
            coalition,
            peers,
            objective,
            eta,
            shadow: None,
            pending: None,
            log: Vec::new(),
        })
    }
}

impl ClientStrategy for CoalitionClient {
    fn id(&self) -> ClientId {
        self.id
    }

    fn role(&self) -> &'static str {
        "coalition"
    }

    fn peers(&self) -> &[ClientId] {
        &self.peers
    }

    fn on_broadcast(&mut self, round: usize, theta: &ParamVector) -> Result<Outgoing, BoxError> {
        if self.shadow.is_none() && round == 0 {
            self.shadow = Some(ShadowState::start(theta, ShadowKind::Coalition));
        }
        let shadow = self.shadow.as_ref().ok_or(AttackError::RoundGap { shadow: 0, round })?;
        let mv = coalition_update(
            self.id,
            &self.coalition,
            round,
            theta,
            shadow,
            self.objective.as_ref(),
            self.eta,
        )?;
        let peer_messages = mail(&self.coalition, self.id, round, shadow, &mv.shared);
        self.pending = Some(mv.shared);
        Ok(Outgoing {
            update: mv.update.update,
            peer_messages,
        })
    }

    fn on_peer_messages(&mut self, round: usize, inbox: &[PeerMessage]) -> Result<(), BoxError> {
        let shadow = self.shadow.as_ref().ok_or(AttackError::RoundGap { shadow: 0, round })?;
        let mut grads = collect_peer_gradients(&self.coalition, self.id, round, shadow, inbox)?;
        let own = self
            .pending
            .take()
            .ok_or(AttackError::UnexpectedMail { round, from: self.id })?;
        grads.insert(self.id, own);
        let next = advance_coalition(shadow, &self.coalition, self.id, &grads, self.eta)?;
        self.log.push(ShadowLogEntry {
            round,
            shadow: next.current.clone(),
            secret: None,
            accumulator: None,
        });
        self.shadow = Some(next);
        Ok(())
    }

    fn shadow_log(&self) -> Option<&[ShadowLogEntry]> {
        Some(&self.log)
    }
}
