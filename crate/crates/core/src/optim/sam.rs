//! ERM and sharpness-aware objectives.
//!
//! The SAM inner maximization uses the first-order step `ε* = ρ·g/‖g‖₂` on the
//! whole parameter vector; the returned gradient is taken at `θ + ε*` without
//! differentiating through `ε*`. Weight decay is added at `θ`, outside the max.

use crate::error::{Error, Result};
use crate::nn::{add_weight_decay, norm, Batch, Model};
use crate::objective::{check_dim, ModelObjective, Objective};

#[derive(Clone, Debug)]
pub struct SamOutput {
    /// `L(θ + ε*) + (α/2)‖θ‖²`.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub perturbation: Vec<f64>,
    /// `‖∇L(θ)‖₂` over the trainable entries.
    pub base_grad_norm: f64,
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::non_finite(what));
    }
    Ok(())
}

fn apply_mask(v: &mut [f64], trainable: Option<&[bool]>) {
    if let Some(mask) = trainable {
        for (x, &keep) in v.iter_mut().zip(mask) {
            if !keep {
                *x = 0.0;
            }
        }
    }
}

/// `L(θ) + (α/2)‖θ‖²` and its gradient; frozen entries get zero gradient.
pub fn erm_step<O: Objective + ?Sized>(
    obj: &O,
    params: &[f64],
    weight_decay: f64,
    trainable: Option<&[bool]>,
) -> Result<(f64, Vec<f64>)> {
    check_dim(obj, params)?;
    let (mut loss, mut grad) = obj.loss_grad(params)?;
    check_finite(&grad, "ERM gradient")?;
    add_weight_decay(&mut loss, &mut grad, params, weight_decay, obj.decay_mask());
    apply_mask(&mut grad, trainable);
    Ok((loss, grad))
}

/// First-order SAM objective and gradient. Only trainable entries are perturbed.
pub fn sam_step<O: Objective + ?Sized>(
    obj: &O,
    params: &[f64],
    rho: f64,
    weight_decay: f64,
    trainable: Option<&[bool]>,
) -> Result<SamOutput> {
    check_dim(obj, params)?;
    if !(rho >= 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be non-negative, got {rho}")));
    }
    let (loss0, grad0) = obj.loss_grad(params)?;
    check_finite(&grad0, "SAM ascent gradient")?;
    let mut ascent = grad0.clone();
    apply_mask(&mut ascent, trainable);
    let g_norm = norm(&ascent);

    let (mut loss, mut grad, perturbation) = if rho == 0.0 || g_norm == 0.0 {
        (loss0, grad0, vec![0.0; params.len()])
    } else {
        let scale = rho / g_norm;
        let eps: Vec<f64> = ascent.iter().map(|g| scale * g).collect();
        let shifted: Vec<f64> = params.iter().zip(&eps).map(|(p, e)| p + e).collect();
        let (l, g) = obj.loss_grad(&shifted)?;
        check_finite(&g, "SAM descent gradient")?;
        (l, g, eps)
    };
    add_weight_decay(&mut loss, &mut grad, params, weight_decay, obj.decay_mask());
    apply_mask(&mut grad, trainable);
    Ok(SamOutput {
        loss,
        grad,
        perturbation,
        base_grad_norm: g_norm,
    })
}

/// Regularized cross-entropy; identical to [`Model::forward_backward`].
pub fn erm_objective(model: &Model, batch: &Batch, weight_decay: f64) -> Result<(f64, Vec<f64>)> {
    let out = model.forward_backward(batch, weight_decay)?;
    Ok((out.loss, out.grad))
}

/// SAM loss and gradient of a model on a batch.
pub fn sam_gradient(model: &Model, batch: &Batch, rho: f64, weight_decay: f64) -> Result<(f64, Vec<f64>)> {
    let obj = ModelObjective::new(model, batch);
    let out = sam_step(&obj, &model.param_vector(), rho, weight_decay, None)?;
    Ok((out.loss, out.grad))
}

/// `max_{|ε| ≤ ρ} L(θ + ε)` for a scalar loss, by grid search over `ε`.
pub fn sam_value_1d(loss: impl Fn(f64) -> f64, theta: f64, rho: f64, eps_steps: usize) -> f64 {
    let steps = eps_steps.max(1);
    (0..=2 * steps)
        .map(|k| loss(theta - rho + rho * k as f64 / steps as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}
