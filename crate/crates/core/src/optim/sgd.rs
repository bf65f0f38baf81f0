use crate::error::{Error, Result};

/// Heavy-ball SGD: `v ← m·v + g`, `θ ← θ − lr·v`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], lr: f64, momentum: f64, velocity: &mut [f64]) -> Result<()> {
    if params.len() != grad.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "sgd_step lengths differ: params {}, grad {}, velocity {}",
            params.len(),
            grad.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}
