//! Checks for attackers that replace everyone else's contribution with their
//! own trajectory: one dictator, a coalition, or every client at once.

use std::collections::BTreeSet;

use dictator_core::{axpy, inf_distance, sum_of, ClientId, ParamVector, RoundRecord};

use crate::error::OracleError;
use crate::report::EquivalenceReport;
use crate::sim::{evaluator, grad_sum, need, step, Evaluators};

pub const TOLERANCE: f64 = 1e-9;

/// Max that lets a NaN through instead of dropping it.
pub(crate) fn worst(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Shared body of the solo and coalition checks: the attackers in `set` own
/// the trajectory `shadow`, and every round must satisfy
/// `θ_{t+1} = θ̂_t − η(Σ_{k∈set} ∇L_k(θ̂_t) + Σ_{n∉set} ∇L_n(θ_t))`.
fn check_takeover(
    claim: &str,
    records: &[RoundRecord],
    shadow: &[ParamVector],
    evaluators: &Evaluators,
    eta: f64,
    set: &BTreeSet<ClientId>,
) -> Result<EquivalenceReport, OracleError> {
    if records.is_empty() {
        return Err(OracleError::InvalidInput("no rounds recorded".into()));
    }
    let rounds = records.len();
    need("shadow trajectory", rounds + 1, shadow.len())?;
    for id in set {
        evaluator(evaluators, *id)?;
    }
    let mut per_round = 0.0_f64;
    for (t, rec) in records.iter().enumerate() {
        let own = grad_sum(evaluators, &shadow[t], |id| set.contains(&id))?;
        let rest = grad_sum(evaluators, &rec.theta_before, |id| !set.contains(&id))?;
        let predicted = step(&shadow[t], eta, &axpy(1.0, &own, &rest)?)?;
        per_round = worst(per_round, inf_distance(&rec.theta_after, &predicted)?);
    }
    let last = &records[rounds - 1];
    let rest = grad_sum(evaluators, &last.theta_before, |id| !set.contains(&id))?;
    let rhs = step(&shadow[rounds], eta, &rest)?;
    let final_diff = inf_distance(&last.theta_after, &rhs)?;
    Ok(EquivalenceReport::new(
        claim,
        last.theta_after.inf_norm(),
        rhs.inf_norm(),
        worst(per_round, final_diff),
        eta * rest.inf_norm(),
        TOLERANCE,
    )
    .with_extra("per_round_max_diff", per_round)
    .with_extra("final_diff", final_diff)
    .with_extra("rounds", rounds as f64))
}

/// Every round `θ_{t+1} = θ̂_t − η(∇L_m(θ̂_t) + Σ_{n≠m}∇L_n(θ_t))`, and at the
/// end `θ* = θ̂_{T+1} − ηΣ_{n≠m}∇L_n(θ_T)`.
///
/// `solo` is the dictator's own trajectory `θ̂_0 = θ_0, …, θ̂_{T+1}`.
pub fn check_single_dictator(
    records: &[RoundRecord],
    solo: &[ParamVector],
    evaluators: &Evaluators,
    eta: f64,
    dictator: ClientId,
) -> Result<EquivalenceReport, OracleError> {
    check_takeover(
        "single_dictator",
        records,
        solo,
        evaluators,
        eta,
        &BTreeSet::from([dictator]),
    )
}

/// The coalition form of [`check_single_dictator`], with `subset` the joint
/// trajectory of the members.
pub fn check_coalition(
    records: &[RoundRecord],
    subset: &[ParamVector],
    evaluators: &Evaluators,
    eta: f64,
    coalition: &BTreeSet<ClientId>,
) -> Result<EquivalenceReport, OracleError> {
    if coalition.len() < 2 || coalition.len() >= evaluators.len() {
        return Err(OracleError::InvalidInput(format!(
            "coalition of {} among {} clients",
            coalition.len(),
            evaluators.len()
        )));
    }
    let report = check_takeover("coalition", records, subset, evaluators, eta, coalition)?;
    Ok(report.with_extra("coalition_size", coalition.len() as f64))
}

/// With every client a dictator,
/// `θ_2 = θ_0 + η(N−2)Σ_n∇L_n(θ_0) − ηΣ_n∇L_n(θ̂ⁿ_1)` where
/// `θ̂ⁿ_1 = θ_0 − η∇L_n(θ_0)`.
pub fn check_mutual_domination_round2(
    theta_0: &ParamVector,
    theta_2: &ParamVector,
    evaluators: &Evaluators,
    eta: f64,
) -> Result<EquivalenceReport, OracleError> {
    let n = evaluators.len();
    if n < 2 {
        return Err(OracleError::InvalidInput(format!("need at least 2 clients, got {n}")));
    }
    let g0 = grad_sum(evaluators, theta_0, |_| true)?;
    let at_shadow = evaluators
        .iter()
        .map(|(id, ev)| {
            let hat_1 = step(theta_0, eta, &ev.gradient(theta_0)?)?;
            Ok((*id, ev.gradient(&hat_1)?))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let refs: Vec<(ClientId, &ParamVector)> = at_shadow.iter().map(|(id, g)| (*id, g)).collect();
    let coefficient = eta * (n as f64 - 2.0);
    let rhs = step(&axpy(coefficient, &g0, theta_0)?, eta, &sum_of(&refs)?)?;
    Ok(EquivalenceReport::new(
        "mutual_domination_round2",
        theta_2.inf_norm(),
        rhs.inf_norm(),
        inf_distance(theta_2, &rhs)?,
        coefficient * g0.inf_norm(),
        TOLERANCE,
    )
    .with_extra("ascent_coefficient", coefficient))
}
