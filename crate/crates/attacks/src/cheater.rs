//! The cheating collaborator.
//!
//! Client 1 plays along with a two-member coalition while privately running a
//! solo shadow. Each round before the betrayal round `E` it accumulates
//! `Δ_t = ∇L_1(θ̂¹_t) − (∇L_1(θ̂^P_t) + ∇L_2(θ̂^P_t))`; at round `E` it sends the
//! accumulated offset instead of its coalition update, which moves the global
//! model from the coalition trajectory onto its own. Afterwards it acts as a
//! single dictator on the solo shadow, while still mailing its partner the
//! coalition gradients so the partner notices nothing.

use std::sync::Arc;

use dictator_core::{
    add, sub, sum_of, BoxError, ClientId, ClientStrategy, Objective, Outgoing, ParamVector, PeerMessage,
    ShadowLogEntry, UpdateMessage,
};

use crate::coalition::{advance_coalition, coalition_update, collect_peer_gradients, mail, CoalitionSpec};
use crate::dictator::dictator_update;
use crate::error::AttackError;
use crate::shadow::{EtaSource, ShadowKind, ShadowState};

#[derive(Debug, Clone, PartialEq)]
pub struct CheatState {
    /// `θ̂^P`, kept bitwise in sync with the partner.
    pub coalition: ShadowState,
    /// `θ̂¹`, the private solo trajectory.
    pub secret: ShadowState,
    /// Running `Σ Δ_t`.
    pub accumulator: ParamVector,
    pub betrayal_round: usize,
    own_shared: Option<ParamVector>,
    secret_grad: Option<ParamVector>,
}

impl CheatState {
    pub fn start(theta_0: &ParamVector, betrayal_round: usize) -> Result<Self, AttackError> {
        if betrayal_round < 2 {
            return Err(AttackError::BetrayalTooEarly(betrayal_round));
        }
        Ok(CheatState {
            coalition: ShadowState::start(theta_0, ShadowKind::Coalition),
            secret: ShadowState::start(theta_0, ShadowKind::Solo),
            accumulator: theta_0.filled_like(0.0),
            betrayal_round,
            own_shared: None,
            secret_grad: None,
        })
    }

    pub fn has_betrayed(&self) -> bool {
        self.coalition.round > self.betrayal_round
    }
}

/// What the cheater sends this round, plus the gradient it mails its partner.
#[derive(Debug, Clone)]
pub struct CheatMove {
    pub update: UpdateMessage,
    pub shared: ParamVector,
}

/// The cheater's broadcast-time step. Finish the round with [`cheater_absorb`]
/// once the partner's gradient arrives.
pub fn cheater_update(
    me: ClientId,
    coalition: &CoalitionSpec,
    state: &CheatState,
    round: usize,
    theta_t: &ParamVector,
    objective: &dyn Objective,
    eta: EtaSource,
) -> Result<(CheatMove, CheatState), AttackError> {
    if coalition.size() != 2 || !coalition.contains(me) {
        return Err(AttackError::InvalidCoalition(
            "the cheater needs a two-member coalition containing itself".into(),
        ));
    }
    let facade = coalition_update(me, coalition, round, theta_t, &state.coalition, objective, eta)?;
    let (solo, secret) = dictator_update(me, round, theta_t, &state.secret, objective, eta)?;
    let e = state.betrayal_round;
    let (update, secret_grad) = if round < e {
        let g = (round > 0).then(|| secret.previous_grad.clone()).flatten();
        (facade.update.update, g)
    } else if round == e {
        (state.accumulator.clone(), None)
    } else {
        (solo.update, None)
    };
    let mut next = state.clone();
    next.secret = secret;
    next.own_shared = Some(facade.shared.clone());
    next.secret_grad = secret_grad;
    Ok((
        CheatMove {
            update: UpdateMessage {
                client_id: me,
                round,
                update,
            },
            shared: facade.shared,
        },
        next,
    ))
}

/// Advances the coalition shadow with the partner's gradient and, before the
/// betrayal round, adds this round's `Δ_t` to the accumulator.
pub fn cheater_absorb(
    me: ClientId,
    coalition: &CoalitionSpec,
    state: &CheatState,
    partner_grad: (ClientId, &ParamVector),
    eta: EtaSource,
) -> Result<CheatState, AttackError> {
    let round = state.coalition.round;
    let own = state.own_shared.clone().ok_or(AttackError::UnexpectedMail {
        round,
        from: partner_grad.0,
    })?;
    let grads = [(me, own), (partner_grad.0, partner_grad.1.clone())]
        .into_iter()
        .collect();
    let mut next = state.clone();
    next.coalition = advance_coalition(&state.coalition, coalition, me, &grads, eta)?;
    if let Some(secret_grad) = &state.secret_grad {
        let pair: Vec<(ClientId, &ParamVector)> = grads.iter().map(|(id, g)| (*id, g)).collect();
        let delta = sub(secret_grad, &sum_of(&pair)?)?;
        next.accumulator = add(&state.accumulator, &delta)?;
    }
    next.own_shared = None;
    next.secret_grad = None;
    Ok(next)
}

pub struct CheaterClient {
    id: ClientId,
    partner: ClientId,
    peers: [ClientId; 1],
    coalition: CoalitionSpec,
    objective: Arc<dyn Objective>,
    eta: EtaSource,
    betrayal_round: usize,
    state: Option<CheatState>,
    log: Vec<ShadowLogEntry>,
}

impl CheaterClient {
    pub fn new(
        id: ClientId,
        partner: ClientId,
        num_clients: usize,
        objective: Arc<dyn Objective>,
        eta: EtaSource,
        betrayal_round: usize,
    ) -> Result<Self, AttackError> {
        if betrayal_round < 2 {
            return Err(AttackError::BetrayalTooEarly(betrayal_round));
        }
        let coalition = CoalitionSpec::new([id, partner], num_clients)?;
        Ok(CheaterClient {
            id,
            partner,
            peers: [partner],
            coalition,
            objective,
            eta,
            betrayal_round,
            state: None,
            log: Vec::new(),
        })
    }

    pub fn state(&self) -> Option<&CheatState> {
        self.state.as_ref()
    }
}

impl ClientStrategy for CheaterClient {
    fn id(&self) -> ClientId {
        self.id
    }

    fn role(&self) -> &'static str {
        "cheater"
    }

    fn peers(&self) -> &[ClientId] {
        &self.peers
    }

    fn on_broadcast(&mut self, round: usize, theta: &ParamVector) -> Result<Outgoing, BoxError> {
        if self.state.is_none() && round == 0 {
            self.state = Some(CheatState::start(theta, self.betrayal_round)?);
        }
        let state = self.state.as_ref().ok_or(AttackError::RoundGap { shadow: 0, round })?;
        let (mv, next) = cheater_update(
            self.id,
            &self.coalition,
            state,
            round,
            theta,
            self.objective.as_ref(),
            self.eta,
        )?;
        let peer_messages = mail(&self.coalition, self.id, round, &state.coalition, &mv.shared);
        self.state = Some(next);
        Ok(Outgoing {
            update: mv.update.update,
            peer_messages,
        })
    }

    fn on_peer_messages(&mut self, round: usize, inbox: &[PeerMessage]) -> Result<(), BoxError> {
        let state = self.state.as_ref().ok_or(AttackError::RoundGap { shadow: 0, round })?;
        let grads = collect_peer_gradients(&self.coalition, self.id, round, &state.coalition, inbox)?;
        let partner_grad = &grads[&self.partner];
        let next = cheater_absorb(self.id, &self.coalition, state, (self.partner, partner_grad), self.eta)?;
        self.log.push(ShadowLogEntry {
            round,
            shadow: next.coalition.current.clone(),
            secret: Some(next.secret.current.clone()),
            accumulator: Some(next.accumulator.clone()),
        });
        self.state = Some(next);
        Ok(())
    }

    fn shadow_log(&self) -> Option<&[ShadowLogEntry]> {
        Some(&self.log)
    }
}
