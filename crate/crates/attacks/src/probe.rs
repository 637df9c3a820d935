//! Learning-rate recovery: send a huge constant update once, read η back off
//! the model displacement, then attack as a single dictator.

use std::sync::Arc;

use dictator_core::{BoxError, ClientId, ClientStrategy, Objective, Outgoing, ParamVector, ShadowLogEntry};

use crate::dictator::dictator_update;
use crate::error::AttackError;
use crate::shadow::{EtaSource, ShadowKind, ShadowState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    /// The constant `B` written into every coordinate of the probe update.
    pub magnitude: f64,
    pub probe_round: usize,
}

impl ProbeConfig {
    pub fn new(magnitude: f64) -> Self {
        ProbeConfig {
            magnitude,
            probe_round: 0,
        }
    }

    fn validate(&self) -> Result<(), AttackError> {
        if self.magnitude <= 0.0 || !self.magnitude.is_finite() {
            return Err(AttackError::InvalidProbe(format!(
                "magnitude must be positive and finite, got {}",
                self.magnitude
            )));
        }
        if self.probe_round != 0 {
            return Err(AttackError::InvalidProbe("only round-0 probes are supported".into()));
        }
        Ok(())
    }
}

/// Median over coordinates of `(θ_t − θ_{t+1})_i / B`.
///
/// Each ratio equals `η (1 + G_i / B)` where `G` is everyone else's summed
/// update, so the error per coordinate is `η |G_i| / B`.
pub fn estimate_eta(theta_t: &ParamVector, theta_next: &ParamVector, probe: &ProbeConfig) -> Result<f64, AttackError> {
    probe.validate()?;
    if theta_t.is_empty() {
        return Err(AttackError::InvalidProbe("cannot estimate from empty vectors".into()));
    }
    if theta_t.len() != theta_next.len() {
        return Err(dictator_core::VectorError::LengthMismatch {
            left: theta_t.len(),
            right: theta_next.len(),
        }
        .into());
    }
    let mut ratios: Vec<f64> = theta_t
        .values()
        .iter()
        .zip(theta_next.values())
        .map(|(a, b)| (a - b) / probe.magnitude)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    Ok(if n % 2 == 1 {
        ratios[n / 2]
    } else {
        0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
    })
}

/// Probes at round 0, estimates η at round 1, then runs the single-dictator attack.
///
/// The shadow starts from `θ̂_1 = θ_0 − η̂ ∇L_m(θ_0)`. The first crafted update's
/// correction term `(θ̂_0 − θ_1)/η̂` contains the probe, so the probe is undone
/// along with everyone else's round-0 contribution.
pub struct ProbeDictatorClient {
    id: ClientId,
    objective: Arc<dyn Objective>,
    probe: ProbeConfig,
    known_eta: Option<f64>,
    theta_0: Option<ParamVector>,
    eta: Option<EtaSource>,
    shadow: Option<ShadowState>,
    log: Vec<ShadowLogEntry>,
}

impl ProbeDictatorClient {
    pub fn new(id: ClientId, objective: Arc<dyn Objective>, probe: ProbeConfig) -> Result<Self, AttackError> {
        probe.validate()?;
        Ok(ProbeDictatorClient {
            id,
            objective,
            probe,
            known_eta: None,
            theta_0: None,
            eta: None,
            shadow: None,
            log: Vec::new(),
        })
    }

    /// Use `eta` instead of the estimate (still sends the probe).
    pub fn with_known_eta(mut self, eta: f64) -> Self {
        self.known_eta = Some(eta);
        self
    }

    /// The learning rate in use, once round 1 has been seen.
    pub fn eta(&self) -> Option<EtaSource> {
        self.eta
    }
}

impl ClientStrategy for ProbeDictatorClient {
    fn id(&self) -> ClientId {
        self.id
    }

    fn role(&self) -> &'static str {
        "probe"
    }

    fn on_broadcast(&mut self, round: usize, theta: &ParamVector) -> Result<Outgoing, BoxError> {
        if round == 0 {
            self.theta_0 = Some(theta.clone());
            return Ok(Outgoing::update(theta.filled_like(self.probe.magnitude)));
        }
        if round == 1 {
            let theta_0 = self
                .theta_0
                .as_ref()
                .ok_or(AttackError::RoundGap { shadow: 0, round })?;
            let eta = match self.known_eta {
                Some(v) => EtaSource::Known(v),
                None => EtaSource::Estimated(estimate_eta(theta_0, theta, &self.probe)?),
            };
            let (_, shadow) = dictator_update(
                self.id,
                0,
                theta_0,
                &ShadowState::start(theta_0, ShadowKind::Solo),
                self.objective.as_ref(),
                eta,
            )?;
            self.eta = Some(eta);
            self.shadow = Some(shadow);
        }
        let (shadow, eta) = match (self.shadow.take(), self.eta) {
            (Some(s), Some(e)) => (s, e),
            _ => return Err(AttackError::RoundGap { shadow: 0, round }.into()),
        };
        let (msg, next) = dictator_update(self.id, round, theta, &shadow, self.objective.as_ref(), eta)?;
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
