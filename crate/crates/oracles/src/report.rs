use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Verdict of one equivalence check: an observed model (`lhs`) against the
/// value a closed form predicts for it (`rhs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub claim_id: String,
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    /// Largest inf-norm gap over everything the check compares.
    pub diff_inf_norm: f64,
    /// Size of the part of the model the attacker does not control.
    pub residual_inf_norm: f64,
    pub passed: bool,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

impl EquivalenceReport {
    pub fn new(
        claim_id: impl Into<String>,
        lhs_norm: f64,
        rhs_norm: f64,
        diff: f64,
        residual: f64,
        tolerance: f64,
    ) -> Self {
        EquivalenceReport {
            claim_id: claim_id.into(),
            lhs_norm,
            rhs_norm,
            diff_inf_norm: diff,
            residual_inf_norm: residual,
            // NaN diffs fail
            passed: diff <= tolerance,
            tolerance,
            extras: BTreeMap::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_follows_tolerance() {
        assert!(EquivalenceReport::new("a", 1.0, 1.0, 1e-10, 0.0, 1e-9).passed);
        assert!(EquivalenceReport::new("a", 1.0, 1.0, 1e-9, 0.0, 1e-9).passed);
        assert!(!EquivalenceReport::new("a", 1.0, 1.0, 2e-9, 0.0, 1e-9).passed);
        assert!(!EquivalenceReport::new("a", 1.0, 1.0, f64::NAN, 0.0, 1e-9).passed);
    }
}
