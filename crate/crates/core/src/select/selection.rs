use serde::{Deserialize, Serialize};

use super::parc::parc_score;
use crate::error::{Error, Result};
use crate::fusion::NamedBackbone;
use crate::nn::{Batch, Matrix, Model};

/// Penultimate activations, one row per sample.
pub type FeatureMatrix = Matrix;

/// Task-agnostic features; refuses a model whose adapter gates are open.
pub fn extract_features(model: &Model, inputs: &Matrix) -> Result<FeatureMatrix> {
    if model.gates_on() {
        return Err(Error::Contract(
            "features must come from the task-agnostic path (gates off)".into(),
        ));
    }
    model.features(inputs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneScore {
    pub name: String,
    /// `None` when the entry's features were degenerate on this support set.
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub scores: Vec<BackboneScore>,
    pub chosen: String,
    /// True when another entry matched the best score and the name order decided.
    pub tie_broken: bool,
}

/// PARC score of one backbone on a support set. Factored LoRA weights are
/// folded first, so fused backbones are scored as the networks they represent.
pub fn score_backbone(model: &Model, support: &Batch) -> Result<f64> {
    let plain = model.fold_adapters();
    let feats = extract_features(&plain, &support.inputs)?;
    parc_score(&feats, &support.labels)
}

/// Picks the bank entry with the highest PARC score on `support`; ties go to
/// the lexicographically first name.
pub fn select_backbone(bank: &[NamedBackbone], support: &Batch) -> Result<SelectionReport> {
    if bank.is_empty() {
        return Err(Error::SelectionFailed("backbone bank is empty".into()));
    }
    let mut order: Vec<&NamedBackbone> = bank.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let mut scores = Vec::with_capacity(order.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, entry) in order.iter().enumerate() {
        match score_backbone(&entry.model, support) {
            Ok(s) => {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
                scores.push(BackboneScore {
                    name: entry.name.clone(),
                    score: Some(s),
                    error: None,
                });
            }
            Err(e @ (Error::DegenerateFeatures(_) | Error::DegenerateLabels(_))) => {
                scores.push(BackboneScore {
                    name: entry.name.clone(),
                    score: None,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let (chosen, top) = best.ok_or_else(|| {
        Error::SelectionFailed("every backbone produced degenerate features".into())
    })?;
    let ties = scores.iter().filter(|s| s.score == Some(top)).count();
    Ok(SelectionReport {
        chosen: order[chosen].name.clone(),
        scores,
        tie_broken: ties > 1,
    })
}
