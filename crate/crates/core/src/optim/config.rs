use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Erm,
    Sam,
}

/// SGD training settings. JSON keys are the field names; missing keys take
/// their default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub total_iterations: usize,
    pub restart_period: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub objective: ObjectiveKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            base_lr: 0.03,
            min_lr: 0.0,
            total_iterations: 1000,
            restart_period: 500,
            momentum: 0.9,
            weight_decay: 1e-4,
            rho: 0.05,
            objective: ObjectiveKind::Sam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Zero iterations is accepted and trains nothing.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.min_lr >= 0.0) || self.min_lr > self.base_lr {
            return bad(format!(
                "need 0 <= min_lr <= base_lr, got min_lr = {}",
                self.min_lr
            ));
        }
        if self.total_iterations > 0
            && (self.restart_period == 0 || self.restart_period > self.total_iterations)
        {
            return bad(format!(
                "restart_period must be in 1..={}, got {}",
                self.total_iterations, self.restart_period
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return bad("weight_decay must be non-negative".into());
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return bad("rho must be non-negative".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain struct");
        hex::encode(Sha256::digest(&json))
    }
}
