//! Check for the learning-rate probe followed by a single-dictator takeover.
//!
//! With `η̂` the step the attacker believes in, `r = η/η̂` and `θ̂'` its solo
//! trajectory taken with step `η̂`, every round `t ≥ 1` satisfies
//! `θ_{t+1} = (1−r)θ_t + rθ̂'_t − η∇L_m(θ̂'_t) − ηO_t` with
//! `O_t = Σ_{n≠m}∇L_n(θ_t)`. For `r = 1` this is the plain dictator identity.

use dictator_core::{axpy, inf_distance, scale, solo_trajectory, sub, ClientId, ParamVector, RoundRecord};

use crate::dictator::{worst, TOLERANCE};
use crate::error::OracleError;
use crate::report::EquivalenceReport;
use crate::sim::{evaluator, grad_sum, need, step, Evaluators};

/// Median over coordinates of `(θ_0 − θ_1)_i / B`.
pub fn median_eta(theta_0: &ParamVector, theta_1: &ParamVector, magnitude: f64) -> Result<f64, OracleError> {
    if magnitude.is_nan() || magnitude <= 0.0 || theta_0.is_empty() {
        return Err(OracleError::InvalidInput(
            "probe needs B > 0 and a non-empty model".into(),
        ));
    }
    let diff = sub(theta_0, theta_1)?;
    let mut ratios: Vec<f64> = diff.values().iter().map(|d| d / magnitude).collect();
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    Ok(if n % 2 == 1 {
        ratios[n / 2]
    } else {
        0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
    })
}

/// How the probing client was configured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSetup {
    pub client: ClientId,
    pub magnitude: f64,
    /// Set when the client was handed η instead of estimating it.
    pub known_eta: Option<f64>,
}

/// Verifies a probe-then-attack run and compares its final model with a plain
/// single-dictator run from the same start.
///
/// The verdict covers the round-0 probe step, the per-round identity above,
/// and whether the final gap to `plain` stays within
/// `‖θ̂'_T − θ̂_T‖ + ρ_probe + ρ_plain`, where each `ρ` is the predicted
/// distance of that run's final model from its own shadow.
pub fn check_probe_dictator(
    probe_records: &[RoundRecord],
    plain_records: &[RoundRecord],
    evaluators: &Evaluators,
    eta: f64,
    setup: ProbeSetup,
) -> Result<EquivalenceReport, OracleError> {
    let rounds = probe_records.len();
    need("probe rounds", 2, rounds)?;
    if plain_records.len() != rounds {
        return Err(OracleError::TrajectoryLength {
            what: "plain rounds",
            expected: rounds,
            got: plain_records.len(),
        });
    }
    let m = setup.client;
    let own = evaluator(evaluators, m)?;
    let others = |theta: &ParamVector| grad_sum(evaluators, theta, |id| id != m);
    let theta_0 = &probe_records[0].theta_before;

    let eta_hat = median_eta(theta_0, &probe_records[0].theta_after, setup.magnitude)?;
    let used = setup.known_eta.unwrap_or(eta_hat);
    if used <= 0.0 || !used.is_finite() {
        // no probe was visible in round 0; f64::MAX keeps the report JSON-safe
        return Ok(EquivalenceReport::new(
            "probe_dictator",
            probe_records[rounds - 1].theta_after.inf_norm(),
            plain_records[rounds - 1].theta_after.inf_norm(),
            f64::MAX,
            0.0,
            TOLERANCE,
        )
        .with_extra("eta_hat", eta_hat));
    }
    let r = eta / used;

    let o_0 = others(theta_0)?;
    let probe_vec = theta_0.filled_like(setup.magnitude);
    let first = step(theta_0, eta, &axpy(1.0, &probe_vec, &o_0)?)?;
    let mut identity = inf_distance(&probe_records[0].theta_after, &first)?;

    let shadow = solo_trajectory(own, theta_0, used, rounds)?;
    for (t, rec) in probe_records.iter().enumerate().skip(1) {
        let mixed = axpy(r, &shadow[t], &scale(1.0 - r, &rec.theta_before))?;
        let pull = axpy(1.0, &own.gradient(&shadow[t])?, &others(&rec.theta_before)?)?;
        identity = worst(identity, inf_distance(&rec.theta_after, &step(&mixed, eta, &pull)?)?);
    }

    let last = &probe_records[rounds - 1];
    let last_plain = &plain_records[rounds - 1];
    let plain_shadow = solo_trajectory(own, theta_0, eta, rounds)?;
    let rho_probe = (1.0 - r).abs() * inf_distance(&last.theta_before, &shadow[rounds - 1])?
        + (eta - used).abs() * own.gradient(&shadow[rounds - 1])?.inf_norm()
        + eta * others(&last.theta_before)?.inf_norm();
    let rho_plain = eta * others(&last_plain.theta_before)?.inf_norm();
    let bound = inf_distance(&shadow[rounds], &plain_shadow[rounds])? + rho_probe + rho_plain;
    let gap = inf_distance(&last.theta_after, &last_plain.theta_after)?;
    let excess = (gap - bound).max(0.0);

    let max_other = o_0.inf_norm();
    Ok(EquivalenceReport::new(
        "probe_dictator",
        last.theta_after.inf_norm(),
        last_plain.theta_after.inf_norm(),
        worst(identity, excess),
        rho_probe,
        TOLERANCE,
    )
    .with_extra("identity_max_diff", identity)
    .with_extra("eta_hat", eta_hat)
    .with_extra("eta_used", used)
    .with_extra("eta_relative_error", (eta_hat - eta).abs() / eta)
    .with_extra("eta_relative_error_bound", max_other / setup.magnitude)
    .with_extra("final_gap_to_plain", gap)
    .with_extra("perturbation_bound", bound))
}
