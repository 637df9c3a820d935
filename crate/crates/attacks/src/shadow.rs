use dictator_core::{axpy, ParamVector};

use crate::error::AttackError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowKind {
    Solo,
    Coalition,
}

/// The learning rate an attacker divides by, and where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSource {
    Known(f64),
    Estimated(f64),
}

impl EtaSource {
    pub fn value(self) -> f64 {
        match self {
            EtaSource::Known(v) | EtaSource::Estimated(v) => v,
        }
    }

    pub(crate) fn checked(self) -> Result<f64, AttackError> {
        let v = self.value();
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(AttackError::BadEta(v))
        }
    }
}

/// An attacker's private trajectory.
///
/// `current` is `θ̂_round`; `previous` and `previous_grad` are `θ̂_{round−1}` and
/// the owner's own gradient there, absent before the first advance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowState {
    pub kind: ShadowKind,
    pub round: usize,
    pub current: ParamVector,
    pub previous: Option<ParamVector>,
    pub previous_grad: Option<ParamVector>,
}

impl ShadowState {
    /// `θ̂_0 = θ_0`.
    pub fn start(theta_0: &ParamVector, kind: ShadowKind) -> Self {
        ShadowState {
            kind,
            round: 0,
            current: theta_0.clone(),
            previous: None,
            previous_grad: None,
        }
    }

    /// Moves to `current − eta * step`, remembering `own_grad` as the gradient at the old point.
    pub(crate) fn advance(&self, step: &ParamVector, own_grad: ParamVector, eta: f64) -> Result<Self, AttackError> {
        Ok(ShadowState {
            kind: self.kind,
            round: self.round + 1,
            current: axpy(-eta, step, &self.current)?,
            previous: Some(self.current.clone()),
            previous_grad: Some(own_grad),
        })
    }

    pub(crate) fn expect_round(&self, round: usize) -> Result<(), AttackError> {
        if self.round != round {
            return Err(AttackError::RoundGap {
                shadow: self.round,
                round,
            });
        }
        Ok(())
    }
}

/// `g_now − ((θ̂_prev − θ_t) / divisor − g_prev)`, element by element.
///
/// The bracket reconstructs what everyone else added to the model last round.
pub(crate) fn crafted_update(
    grad_now: &ParamVector,
    shadow_prev: &ParamVector,
    grad_prev: &ParamVector,
    theta_t: &ParamVector,
    divisor: f64,
) -> Result<ParamVector, AttackError> {
    for v in [shadow_prev, grad_prev, theta_t] {
        if v.len() != grad_now.len() {
            return Err(AttackError::Vector(dictator_core::VectorError::LengthMismatch {
                left: grad_now.len(),
                right: v.len(),
            }));
        }
    }
    let values = grad_now
        .values()
        .iter()
        .zip(shadow_prev.values())
        .zip(grad_prev.values())
        .zip(theta_t.values())
        .map(|(((gn, sp), gp), th)| gn - ((sp - th) / divisor - gp))
        .collect();
    Ok(ParamVector::new(values, grad_now.shape().clone()))
}
