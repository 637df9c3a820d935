//! The single dictator: erase everyone else's last-round contribution and
//! replay one's own solo training step instead.

use std::sync::Arc;

use dictator_core::{
    BoxError, ClientId, ClientStrategy, Objective, Outgoing, ParamVector, ShadowLogEntry, UpdateMessage,
};

use crate::error::AttackError;
use crate::shadow::{crafted_update, EtaSource, ShadowKind, ShadowState};

/// One round of the single-dictator attack for client `m`.
///
/// Round 0 sends the honest gradient and steps the shadow to
/// `θ̂_1 = θ_0 − η∇L_m(θ_0)`. Later rounds send
/// `M_t = ∇L_m(θ̂_t) − ((θ̂_{t−1} − θ_t)/η − ∇L_m(θ̂_{t−1}))` and step the shadow
/// to `θ̂_{t+1} = θ̂_t − η∇L_m(θ̂_t)`.
pub fn dictator_update(
    m: ClientId,
    round: usize,
    theta_t: &ParamVector,
    shadow: &ShadowState,
    objective: &dyn Objective,
    eta: EtaSource,
) -> Result<(UpdateMessage, ShadowState), AttackError> {
    let eta = eta.checked()?;
    shadow.expect_round(round)?;
    let grad = objective.gradient(&shadow.current)?;
    let update = match (&shadow.previous, &shadow.previous_grad) {
        (Some(prev), Some(prev_grad)) => crafted_update(&grad, prev, prev_grad, theta_t, eta)?,
        _ => grad.clone(),
    };
    let next = shadow.advance(&grad, grad.clone(), eta)?;
    Ok((
        UpdateMessage {
            client_id: m,
            round,
            update,
        },
        next,
    ))
}

/// Runs [`dictator_update`] every round.
pub struct DictatorClient {
    id: ClientId,
    objective: Arc<dyn Objective>,
    eta: EtaSource,
    shadow: Option<ShadowState>,
    log: Vec<ShadowLogEntry>,
}

impl DictatorClient {
    pub fn new(id: ClientId, objective: Arc<dyn Objective>, eta: EtaSource) -> Self {
        DictatorClient {
            id,
            objective,
            eta,
            shadow: None,
            log: Vec::new(),
        }
    }

    pub fn eta(&self) -> EtaSource {
        self.eta
    }
}

impl ClientStrategy for DictatorClient {
    fn id(&self) -> ClientId {
        self.id
    }

    fn role(&self) -> &'static str {
        "dictator"
    }

    fn on_broadcast(&mut self, round: usize, theta: &ParamVector) -> Result<Outgoing, BoxError> {
        let shadow = match self.shadow.take() {
            Some(s) => s,
            None if round == 0 => ShadowState::start(theta, ShadowKind::Solo),
            None => return Err(AttackError::RoundGap { shadow: 0, round }.into()),
        };
        let (msg, next) = dictator_update(self.id, round, theta, &shadow, self.objective.as_ref(), self.eta)?;
        self.log.push(ShadowLogEntry {
            round,
            shadow: next.current.clone(),
            secret: None,
            accumulator: None,
        });
        self.shadow = Some(next);
        Ok(Outgoing::update(msg.update))
    }

    fn shadow_log(&self) -> Option<&[ShadowLogEntry]> {
        Some(&self.log)
    }
}

/// Every client runs the single-dictator attack with its own solo shadow.
pub fn compose_mutual_domination(
    objectives: &[(ClientId, Arc<dyn Objective>)],
    eta: EtaSource,
) -> Result<Vec<Box<dyn ClientStrategy>>, AttackError> {
    if objectives.len() < 2 {
        return Err(AttackError::InvalidCoalition(format!(
            "mutual domination needs at least 2 clients, got {}",
            objectives.len()
        )));
    }
    Ok(objectives
        .iter()
        .map(|(id, obj)| Box::new(DictatorClient::new(*id, obj.clone(), eta)) as Box<dyn ClientStrategy>)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dictator_core::Quadratic;

    fn scalar(x: f64) -> ParamVector {
        ParamVector::raw(vec![x])
    }

    #[test]
    fn round_zero_sends_true_gradient() {
        let q = Quadratic::scalar(0.0);
        let theta0 = scalar(1.0);
        let shadow = ShadowState::start(&theta0, ShadowKind::Solo);
        let (msg, next) = dictator_update(ClientId(1), 0, &theta0, &shadow, &q, EtaSource::Known(0.1)).unwrap();
        assert_eq!(msg.update.values(), &[1.0]);
        assert_eq!(next.round, 1);
        assert_eq!(next.current.values(), &[0.9]);
        assert_eq!(next.previous.unwrap().values(), &[1.0]);
    }

    #[test]
    fn correction_vanishes_when_global_matches_shadow() {
        // θ_t == θ̂_t means nobody else moved the model last round
        let q = Quadratic::new(vec![0.3, -0.4], 2.0);
        let eta = 0.05;
        let theta0 = ParamVector::raw(vec![1.0, 1.0]);
        let s0 = ShadowState::start(&theta0, ShadowKind::Solo);
        let (_, s1) = dictator_update(ClientId(2), 0, &theta0, &s0, &q, EtaSource::Known(eta)).unwrap();
        let theta1 = s1.current.clone();
        let (msg, _) = dictator_update(ClientId(2), 1, &theta1, &s1, &q, EtaSource::Known(eta)).unwrap();
        let direct = q.gradient(&s1.current).unwrap();
        assert!(dictator_core::inf_distance(&msg.update, &direct).unwrap() < 1e-14);
    }

    #[test]
    fn scalar_hand_trace() {
        // dictator L_m = θ²/2, honest L_h = (θ−2)²/2, θ_0 = 1, η = 0.1
        let dict = Quadratic::scalar(0.0);
        let honest = Quadratic::scalar(2.0);
        let eta = 0.1;
        let theta0 = scalar(1.0);
        let s0 = ShadowState::start(&theta0, ShadowKind::Solo);
        let (m0, s1) = dictator_update(ClientId(1), 0, &theta0, &s0, &dict, EtaSource::Known(eta)).unwrap();
        // θ_1 = 1 − 0.1(1 + (−1)) = 1
        let theta1 = 1.0 - eta * (m0.update.values()[0] + honest.gradient(&theta0).unwrap().values()[0]);
        assert_eq!(theta1, 1.0);
        let (m1, s2) = dictator_update(ClientId(1), 1, &scalar(theta1), &s1, &dict, EtaSource::Known(eta)).unwrap();
        // M_1 = 0.9 − ((1 − 1)/0.1 − 1) = 1.9
        assert!((m1.update.values()[0] - 1.9).abs() < 1e-15);
        let theta2 = theta1 - eta * (m1.update.values()[0] + (theta1 - 2.0));
        assert!((theta2 - 0.91).abs() < 1e-15);
        // θ_2 = θ̂_1 − η(∇L_m(θ̂_1) + ∇L_h(θ_1))
        assert!((theta2 - (0.9 - eta * (0.9 + (theta1 - 2.0)))).abs() < 1e-15);
        assert!((s2.current.values()[0] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_eta_and_round_gaps() {
        let q = Quadratic::scalar(0.0);
        let theta0 = scalar(1.0);
        let s0 = ShadowState::start(&theta0, ShadowKind::Solo);
        assert!(matches!(
            dictator_update(ClientId(1), 0, &theta0, &s0, &q, EtaSource::Known(0.0)),
            Err(AttackError::BadEta(_))
        ));
        assert!(matches!(
            dictator_update(ClientId(1), 3, &theta0, &s0, &q, EtaSource::Estimated(0.1)),
            Err(AttackError::RoundGap { shadow: 0, round: 3 })
        ));
    }

    #[test]
    fn mutual_domination_needs_two_clients() {
        let only: Vec<(ClientId, Arc<dyn Objective>)> = vec![(ClientId(1), Arc::new(Quadratic::scalar(0.0)))];
        assert!(compose_mutual_domination(&only, EtaSource::Known(0.1)).is_err());
    }
}
