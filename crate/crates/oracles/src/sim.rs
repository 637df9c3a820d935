//! Straight-line re-simulation helpers shared by the checkers.

use std::collections::BTreeMap;
use std::sync::Arc;

use dictator_core::{axpy, sum_of, ClientId, Objective, ParamVector, RoundRecord, UpdateMessage};

use crate::error::OracleError;

/// Each client's full-batch objective.
pub type Evaluators = BTreeMap<ClientId, Arc<dyn Objective>>;

/// `Σ ∇L_n(θ)` over the clients `keep` accepts, in ascending id order; zero if none.
pub(crate) fn grad_sum(
    evaluators: &Evaluators,
    theta: &ParamVector,
    keep: impl Fn(ClientId) -> bool,
) -> Result<ParamVector, OracleError> {
    let grads = evaluators
        .iter()
        .filter(|(id, _)| keep(**id))
        .map(|(id, ev)| Ok((*id, ev.gradient(theta)?)))
        .collect::<Result<Vec<_>, OracleError>>()?;
    if grads.is_empty() {
        return Ok(theta.filled_like(0.0));
    }
    let refs: Vec<(ClientId, &ParamVector)> = grads.iter().map(|(id, g)| (*id, g)).collect();
    Ok(sum_of(&refs)?)
}

pub(crate) fn evaluator(evaluators: &Evaluators, id: ClientId) -> Result<&dyn Objective, OracleError> {
    evaluators
        .get(&id)
        .map(|e| e.as_ref())
        .ok_or(OracleError::MissingEvaluator(id))
}

/// `θ − η g`
pub(crate) fn step(theta: &ParamVector, eta: f64, g: &ParamVector) -> Result<ParamVector, OracleError> {
    Ok(axpy(-eta, g, theta)?)
}

pub(crate) fn need(what: &'static str, expected: usize, got: usize) -> Result<(), OracleError> {
    if got < expected {
        return Err(OracleError::TrajectoryLength { what, expected, got });
    }
    Ok(())
}

/// Plain FedSGD with every client honest, computed without the round engine.
///
/// Used as the negative-control input for every checker.
pub fn simulate_honest(
    evaluators: &Evaluators,
    theta_0: &ParamVector,
    eta: f64,
    rounds: usize,
) -> Result<Vec<RoundRecord>, OracleError> {
    if evaluators.is_empty() {
        return Err(OracleError::InvalidInput("no clients".into()));
    }
    let mut theta = theta_0.clone();
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut updates = Vec::with_capacity(evaluators.len());
        let mut total = theta.filled_like(0.0);
        for (id, ev) in evaluators {
            let g = ev.gradient(&theta)?;
            for (acc, v) in total.values_mut().iter_mut().zip(g.values()) {
                *acc += v;
            }
            updates.push(UpdateMessage {
                client_id: *id,
                round,
                update: g,
            });
        }
        let next = step(&theta, eta, &total)?;
        out.push(RoundRecord {
            round,
            theta_before: std::mem::replace(&mut theta, next.clone()),
            updates,
            theta_after: next,
            per_client_metrics: Vec::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dictator_core::Quadratic;

    #[test]
    fn honest_quadratics_follow_the_geometric_recursion() {
        // θ_{t+1} = θ_t − η Σ (θ_t − c_n)
        let centers = [1.0, -2.0, 4.0];
        let evs: Evaluators = centers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    ClientId(i as u32 + 1),
                    Arc::new(Quadratic::scalar(*c)) as Arc<dyn Objective>,
                )
            })
            .collect();
        let eta = 0.1;
        let recs = simulate_honest(&evs, &ParamVector::raw(vec![0.5]), eta, 6).unwrap();
        let mut theta: f64 = 0.5;
        for r in &recs {
            theta -= eta * centers.iter().map(|c| theta - c).sum::<f64>();
            assert!((r.theta_after.values()[0] - theta).abs() < 1e-14);
        }
        assert_eq!(recs[2].recompute(eta).unwrap(), recs[2].theta_after);
    }

    #[test]
    fn empty_sum_is_zero() {
        let evs: Evaluators = BTreeMap::new();
        let z = grad_sum(&evs, &ParamVector::raw(vec![1.0, 2.0]), |_| true).unwrap();
        assert_eq!(z.values(), &[0.0, 0.0]);
    }
}
