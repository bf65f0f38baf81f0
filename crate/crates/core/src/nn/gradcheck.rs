use super::{Batch, Model};
use crate::error::{Error, Result};

/// Largest relative disagreement between the analytic gradient of the mean
/// cross-entropy and a central finite difference.
///
/// Uses the fourth-order central stencil
/// `(8(f(θ+h) − f(θ−h)) − (f(θ+2h) − f(θ−2h))) / 12h` per coordinate and reports
/// `max |a − c| / (|a| + |c| + 1e-12)`.
pub fn gradient_check(model: &Model, batch: &Batch, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be > 0, got {step}")));
    }
    let analytic = model.data_loss_grad(batch)?.grad;
    let theta = model.param_vector();
    let mut probe = model.clone();
    let mut shifted = theta.clone();
    let mut loss_at = |i: usize, offset: f64| -> Result<f64> {
        shifted[i] = theta[i] + offset;
        probe.set_params(&shifted)?;
        let l = probe.data_loss_grad(batch)?.loss;
        shifted[i] = theta[i];
        Ok(l)
    };
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        // Paired differences so a parameter with no effect gives exactly zero.
        let near = loss_at(i, step)? - loss_at(i, -step)?;
        let far = loss_at(i, 2.0 * step)? - loss_at(i, -2.0 * step)?;
        let c = (8.0 * near - far) / (12.0 * step);
        let rel = (a - c).abs() / (a.abs() + c.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
