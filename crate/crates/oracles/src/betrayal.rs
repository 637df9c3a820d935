//! Check for the betrayal round of a two-member coalition.
//!
//! With `R_t = Σ_{n∉{1,2}}∇L_n(θ_t)`, `S_t = ∇L_1(θ̂^P_t) + ∇L_2(θ̂^P_t)` and the
//! accumulator `Σ_{t=1}^{E−1}(∇L_1(θ̂¹_t) − S_t)` sent at round `E`:
//!
//! `θ_{E+1} = θ̂¹_E − η∇L_2(θ_0) − η(R_{E−1} + M²_E + R_E)`.
//!
//! The `∇L_2(θ_0)` term is what is left of the round-0 partner gradient, which
//! the accumulator (starting at `t = 1`) never cancels. The shorter form
//! `θ̂¹_{E−1} − η(S_{E−1} + R_{E−1}) − η(M²_E + R_E)` drops that term and one
//! `Δ_{E−1}`; its gap is reported as `literal_form_diff` but does not decide
//! the verdict.

use dictator_core::{
    axpy, inf_distance, solo_trajectory, subset_trajectory, sum_of, ClientId, ParamVector, RoundRecord, ShadowLogEntry,
};

use crate::dictator::{worst, TOLERANCE};
use crate::error::OracleError;
use crate::report::EquivalenceReport;
use crate::sim::{evaluator, grad_sum, need, step, Evaluators};

/// Who betrays whom, and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Betrayal {
    pub cheater: ClientId,
    pub partner: ClientId,
    pub round: usize,
}

/// Verifies the run before, at and after the betrayal round.
///
/// * rounds `t < E` follow the coalition identity
///   `θ_{t+1} = θ̂^P_t − η(S_t + R_t)`;
/// * `θ_{E+1}` matches the closed form above;
/// * rounds `t > E` follow the cheater's solo takeover
///   `θ_{t+1} = θ̂¹_t − η(∇L_1(θ̂¹_t) + M²_t + R_t)`.
///
/// Both shadow trajectories are recomputed here; `cheat_log`, when given, is
/// compared against them (including the accumulator) and any mismatch counts
/// against the verdict.
pub fn check_betrayal(
    records: &[RoundRecord],
    cheat_log: Option<&[ShadowLogEntry]>,
    evaluators: &Evaluators,
    eta: f64,
    betrayal: Betrayal,
) -> Result<EquivalenceReport, OracleError> {
    let Betrayal {
        cheater,
        partner,
        round: e,
    } = betrayal;
    if e < 2 {
        return Err(OracleError::InvalidInput(format!(
            "betrayal round must be at least 2, got {e}"
        )));
    }
    if cheater == partner || evaluators.len() < 3 {
        return Err(OracleError::InvalidInput(
            "need two distinct coalition members and at least one outsider".into(),
        ));
    }
    need("rounds", e + 1, records.len())?;
    let rounds = records.len();
    let g1 = evaluator(evaluators, cheater)?;
    let g2 = evaluator(evaluators, partner)?;
    let theta_0 = &records[0].theta_before;
    let pair = [(cheater, g1), (partner, g2)];
    let hat_p = subset_trajectory(&pair, theta_0, eta, rounds)?;
    let hat_1 = solo_trajectory(g1, theta_0, eta, rounds)?;

    let outside = |id: ClientId| id != cheater && id != partner;
    let rest = |t: usize| grad_sum(evaluators, &records[t].theta_before, outside);
    let joint = |theta: &ParamVector| grad_sum(evaluators, theta, |id| !outside(id));
    let partner_msg = |t: usize| {
        records[t]
            .update_of(partner)
            .ok_or_else(|| OracleError::InvalidInput(format!("round {t} has no update from {partner}")))
    };

    let mut before = 0.0_f64;
    for t in 0..e {
        let predicted = step(&hat_p[t], eta, &axpy(1.0, &joint(&hat_p[t])?, &rest(t)?)?)?;
        before = worst(before, inf_distance(&records[t].theta_after, &predicted)?);
    }

    let (r_prev, r_e) = (rest(e - 1)?, rest(e)?);
    let m2_e = partner_msg(e)?;
    let tail = sum_of(&[(ClientId(0), &r_prev), (ClientId(1), m2_e), (ClientId(2), &r_e)])?;
    let rhs = step(&step(&hat_1[e], eta, &g2.gradient(theta_0)?)?, eta, &tail)?;
    let observed = &records[e].theta_after;
    let closed = inf_distance(observed, &rhs)?;
    let literal = step(
        &step(&hat_1[e - 1], eta, &axpy(1.0, &joint(&hat_p[e - 1])?, &r_prev)?)?,
        eta,
        &axpy(1.0, m2_e, &r_e)?,
    )?;

    let mut after = 0.0_f64;
    for t in e + 1..rounds {
        let own = g1.gradient(&hat_1[t])?;
        let others = axpy(1.0, partner_msg(t)?, &rest(t)?)?;
        let predicted = step(&hat_1[t], eta, &axpy(1.0, &own, &others)?)?;
        after = worst(after, inf_distance(&records[t].theta_after, &predicted)?);
    }

    let mut diff = worst(worst(before, closed), after);
    let mut report_log = None;
    if let Some(log) = cheat_log {
        let d = compare_log(log, &hat_p, &hat_1, g1, evaluators, cheater, partner, e)?;
        diff = worst(diff, d);
        report_log = Some(d);
    }
    let mut report = EquivalenceReport::new(
        "betrayal",
        observed.inf_norm(),
        rhs.inf_norm(),
        diff,
        inf_distance(&rhs, &hat_1[e + 1])?,
        TOLERANCE,
    )
    .with_extra("closed_form_diff", closed)
    .with_extra("literal_form_diff", inf_distance(observed, &literal)?)
    .with_extra("pre_betrayal_max_diff", before)
    .with_extra("post_betrayal_max_diff", after)
    .with_extra(
        "distance_to_coalition_trajectory",
        inf_distance(observed, &hat_p[e + 1])?,
    )
    .with_extra("betrayal_round", e as f64);
    if let Some(d) = report_log {
        report = report.with_extra("log_max_diff", d);
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn compare_log(
    log: &[ShadowLogEntry],
    hat_p: &[ParamVector],
    hat_1: &[ParamVector],
    g1: &dyn dictator_core::Objective,
    evaluators: &Evaluators,
    cheater: ClientId,
    partner: ClientId,
    e: usize,
) -> Result<f64, OracleError> {
    need("cheat log", e, log.len())?;
    let mut acc = hat_p[0].filled_like(0.0);
    let mut worst_diff = 0.0_f64;
    for (t, entry) in log.iter().enumerate().take(hat_p.len() - 1) {
        if entry.round != t {
            return Err(OracleError::InvalidInput(format!(
                "log entry {t} is for round {}",
                entry.round
            )));
        }
        worst_diff = worst(worst_diff, inf_distance(&entry.shadow, &hat_p[t + 1])?);
        let secret = entry
            .secret
            .as_ref()
            .ok_or_else(|| OracleError::InvalidInput(format!("log entry {t} has no secret shadow")))?;
        worst_diff = worst(worst_diff, inf_distance(secret, &hat_1[t + 1])?);
        if (1..e).contains(&t) {
            let joint = grad_sum(evaluators, &hat_p[t], |id| id == cheater || id == partner)?;
            acc = axpy(1.0, &dictator_core::sub(&g1.gradient(&hat_1[t])?, &joint)?, &acc)?;
        }
        if t < e {
            let logged = entry
                .accumulator
                .as_ref()
                .ok_or_else(|| OracleError::InvalidInput(format!("log entry {t} has no accumulator")))?;
            worst_diff = worst(worst_diff, inf_distance(logged, &acc)?);
        }
    }
    Ok(worst_diff)
}
