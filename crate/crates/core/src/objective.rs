//! Losses over a flat parameter vector.
//!
//! Training, curvature estimates and landscape slices are written against
//! [`Objective`], so the same code runs on an MLP or on a closed-form toy loss.

use crate::error::{Error, Result};
use crate::nn::{Batch, Model};

pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Data loss `L(θ)` and `∇L(θ)`, without any regularizer.
    fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, params: &[f64]) -> Result<f64> {
        Ok(self.loss_grad(params)?.0)
    }

    /// Entries covered by weight decay; `None` means all.
    fn decay_mask(&self) -> Option<&[bool]> {
        None
    }
}

/// Mean cross-entropy of a model on a fixed batch.
pub struct ModelObjective<'a> {
    template: Model,
    batch: &'a Batch,
    decay_mask: Vec<bool>,
}

impl<'a> ModelObjective<'a> {
    pub fn new(model: &Model, batch: &'a Batch) -> Self {
        Self {
            template: model.clone(),
            batch,
            decay_mask: model.decay_mask(),
        }
    }

    pub fn model(&self) -> &Model {
        &self.template
    }
}

impl Objective for ModelObjective<'_> {
    fn dim(&self) -> usize {
        self.template.param_count()
    }

    fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.template.unflatten(params)?;
        let out = m.data_loss_grad(self.batch)?;
        Ok((out.loss, out.grad))
    }

    fn decay_mask(&self) -> Option<&[bool]> {
        Some(&self.decay_mask)
    }
}

pub(crate) fn check_dim(obj: &(impl Objective + ?Sized), params: &[f64]) -> Result<()> {
    if params.len() != obj.dim() {
        return Err(Error::Shape(format!(
            "parameter vector has length {}, objective expects {}",
            params.len(),
            obj.dim()
        )));
    }
    Ok(())
}

/// Closed-form losses for exercising optimizers and curvature code.
pub mod toy {
    use super::*;

    /// `L(θ) = ½ θᵀ H θ` with a dense symmetric `H`.
    #[derive(Clone, Debug)]
    pub struct Quadratic {
        n: usize,
        hessian: Vec<f64>,
    }

    impl Quadratic {
        pub fn diagonal(diag: &[f64]) -> Self {
            let n = diag.len();
            let mut hessian = vec![0.0; n * n];
            for (i, d) in diag.iter().enumerate() {
                hessian[i * n + i] = *d;
            }
            Self { n, hessian }
        }

        /// Symmetrizes `h` (row-major `n × n`).
        pub fn dense(n: usize, h: &[f64]) -> Result<Self> {
            if h.len() != n * n {
                return Err(Error::Shape(format!("need {} entries for {n}x{n}", n * n)));
            }
            let mut hessian = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    hessian[i * n + j] = 0.5 * (h[i * n + j] + h[j * n + i]);
                }
            }
            Ok(Self { n, hessian })
        }

        /// `H = v vᵀ`.
        pub fn rank_one(v: &[f64]) -> Self {
            let n = v.len();
            let hessian = (0..n * n).map(|k| v[k / n] * v[k % n]).collect();
            Self { n, hessian }
        }

        pub fn hessian(&self) -> &[f64] {
            &self.hessian
        }

        fn apply(&self, x: &[f64]) -> Vec<f64> {
            (0..self.n)
                .map(|i| crate::nn::dot(&self.hessian[i * self.n..(i + 1) * self.n], x))
                .collect()
        }
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.n
        }

        fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
            check_dim(self, params)?;
            let g = self.apply(params);
            Ok((0.5 * crate::nn::dot(params, &g), g))
        }
    }

    /// One-dimensional loss with a narrow deep basin and a wide shallow one:
    /// `L(θ) = −a₁·exp(−(θ−c₁)²/w₁) − a₂·exp(−(θ−c₂)²/w₂)`.
    #[derive(Clone, Copy, Debug)]
    pub struct TwoBasin {
        pub sharp_depth: f64,
        pub sharp_center: f64,
        pub sharp_width: f64,
        pub flat_depth: f64,
        pub flat_center: f64,
        pub flat_width: f64,
    }

    impl Default for TwoBasin {
        fn default() -> Self {
            Self {
                sharp_depth: 1.0,
                sharp_center: 1.0,
                sharp_width: 0.02,
                flat_depth: 0.8,
                flat_center: 3.0,
                flat_width: 1.0,
            }
        }
    }

    impl TwoBasin {
        pub fn value(&self, t: f64) -> f64 {
            let s = (t - self.sharp_center).powi(2) / self.sharp_width;
            let f = (t - self.flat_center).powi(2) / self.flat_width;
            -self.sharp_depth * (-s).exp() - self.flat_depth * (-f).exp()
        }

        pub fn derivative(&self, t: f64) -> f64 {
            let s = (t - self.sharp_center).powi(2) / self.sharp_width;
            let f = (t - self.flat_center).powi(2) / self.flat_width;
            self.sharp_depth * (-s).exp() * 2.0 * (t - self.sharp_center) / self.sharp_width
                + self.flat_depth * (-f).exp() * 2.0 * (t - self.flat_center) / self.flat_width
        }
    }

    impl Objective for TwoBasin {
        fn dim(&self) -> usize {
            1
        }

        fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
            check_dim(self, params)?;
            Ok((self.value(params[0]), vec![self.derivative(params[0])]))
        }
    }
}
