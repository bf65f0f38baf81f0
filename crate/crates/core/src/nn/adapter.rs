//! Task-specific residual adapters.
//!
//! An adapter adds `Δ·h_in` to a layer's pre-activation, `z' = W·h_in + b + g·Δ·h_in`,
//! where the gate `g` is 0 or 1. `Δ` is either a dense `[out × in]` matrix or a
//! low-rank product `B·A` with `B: [out × r]`, `A: [r × in]`.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    FullResidual,
    LowRank,
}

/// What to attach: kind and (for low-rank) rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub kind: AdapterKind,
    #[serde(default)]
    pub rank: usize,
}

impl AdapterSpec {
    pub fn low_rank(rank: usize) -> Self {
        Self {
            kind: AdapterKind::LowRank,
            rank,
        }
    }

    pub fn full_residual() -> Self {
        Self {
            kind: AdapterKind::FullResidual,
            rank: 0,
        }
    }

    pub(crate) fn validate_for(&self, out_dim: usize, in_dim: usize) -> Result<()> {
        if self.kind == AdapterKind::LowRank {
            if self.rank == 0 {
                return Err(Error::InvalidSpec("low-rank adapter needs rank >= 1".into()));
            }
            if self.rank >= out_dim.min(in_dim) {
                return Err(Error::InvalidSpec(format!(
                    "rank {} must be below min(in, out) = {} for layer [{out_dim}x{in_dim}]",
                    self.rank,
                    out_dim.min(in_dim)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Adapter {
    FullResidual { delta: Matrix },
    LowRank { b: Matrix, a: Matrix },
}

impl Adapter {
    pub fn kind(&self) -> AdapterKind {
        match self {
            Adapter::FullResidual { .. } => AdapterKind::FullResidual,
            Adapter::LowRank { .. } => AdapterKind::LowRank,
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Adapter::FullResidual { .. } => 0,
            Adapter::LowRank { a, .. } => a.rows(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Adapter::FullResidual { delta } => delta.data().len(),
            Adapter::LowRank { b, a } => b.data().len() + a.data().len(),
        }
    }

    /// The effective `[out × in]` update.
    pub fn delta(&self) -> Matrix {
        match self {
            Adapter::FullResidual { delta } => delta.clone(),
            Adapter::LowRank { b, a } => b.matmul(a),
        }
    }

    pub(crate) fn zeros_like(spec: &AdapterSpec, out_dim: usize, in_dim: usize) -> Self {
        match spec.kind {
            AdapterKind::FullResidual => Adapter::FullResidual {
                delta: Matrix::zeros(out_dim, in_dim),
            },
            AdapterKind::LowRank => Adapter::LowRank {
                b: Matrix::zeros(out_dim, spec.rank),
                a: Matrix::zeros(spec.rank, in_dim),
            },
        }
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        let (first, second): (&[f64], &[f64]) = match self {
            Adapter::FullResidual { delta } => (delta.data(), &[]),
            Adapter::LowRank { b, a } => (b.data(), a.data()),
        };
        first.iter().chain(second.iter())
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut f64> {
        match self {
            Adapter::FullResidual { delta } => delta.data_mut().iter_mut().collect(),
            Adapter::LowRank { b, a } => b
                .data_mut()
                .iter_mut()
                .chain(a.data_mut().iter_mut())
                .collect(),
        }
    }
}
