//! Central-difference validation of analytic gradients.

use crate::error::ModelError;
use crate::model::Objective;
use crate::params::ParamVector;

/// Max over coordinates of `|analytic - fd| / (|fd| + 1e-12)` where `fd` is the
/// central difference `(L(θ + h e_i) - L(θ - h e_i)) / 2h`.
pub fn fd_check(obj: &dyn Objective, theta: &ParamVector, h: f64) -> Result<f64, ModelError> {
    if h <= 0.0 || !h.is_finite() {
        return Err(ModelError::BadStep(h));
    }
    let analytic = obj.gradient(theta)?;
    let mut probe = theta.clone();
    let mut worst = 0.0_f64;
    for i in 0..theta.len() {
        let orig = theta.values()[i];
        probe.values_mut()[i] = orig + h;
        let plus = obj.loss(&probe)?;
        probe.values_mut()[i] = orig - h;
        let minus = obj.loss(&probe)?;
        probe.values_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(ModelError::NonFinite {
                what: "loss at perturbed point",
            });
        }
        let fd = (plus - minus) / (2.0 * h);
        let err = (analytic.values()[i] - fd).abs() / (fd.abs() + 1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
