//! Per-task adaptation of gated adapters on the support set.
//!
//! The support loss is cross-entropy over prototype logits `−‖f(x) − c_k‖²`,
//! with centroids recomputed from the adapted features at every step, so the
//! quantity being optimized matches the final nearest-centroid rule.

use serde::{Deserialize, Serialize};

use super::ncc::{centroids, ncc_classify, squared_distances};
use super::selection::extract_features;
use crate::data::Episode;
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, AdapterKind, AdapterSpec, Matrix, Model};
use crate::optim::sgd_step;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub kind: AdapterKind,
    pub rank: usize,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 0,
            lr: 0.1,
            momentum: 0.9,
            kind: AdapterKind::FullResidual,
            rank: 0,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    fn spec(&self) -> AdapterSpec {
        AdapterSpec {
            kind: self.kind,
            rank: self.rank,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adaptation {
    pub model: Model,
    pub predictions: Vec<usize>,
    /// Support loss before each step.
    pub support_loss: Vec<f64>,
}

/// Prototype cross-entropy of `features` and its gradient with respect to them.
pub fn prototype_loss(features: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let c = centroids(features, labels)?;
    let y: Vec<usize> = labels
        .iter()
        .map(|l| c.classes.binary_search(l).expect("class present"))
        .collect();
    let mut logits = squared_distances(features, &c);
    logits.scale(-1.0);
    let (loss, g) = softmax_cross_entropy(&logits, &y);

    let dim = features.cols();
    let mut d_feat = Matrix::zeros(features.rows(), dim);
    let mut d_cent = Matrix::zeros(c.classes.len(), dim);
    for i in 0..features.rows() {
        let f = features.row(i);
        for k in 0..c.classes.len() {
            let gik = g.get(i, k);
            if gik == 0.0 {
                continue;
            }
            let ck = c.means.row(k);
            for j in 0..dim {
                let diff = f[j] - ck[j];
                d_feat.row_mut(i)[j] -= 2.0 * gik * diff;
                d_cent.row_mut(k)[j] += 2.0 * gik * diff;
            }
        }
    }
    for (i, &k) in y.iter().enumerate() {
        let scale = 1.0 / c.counts[k] as f64;
        for j in 0..dim {
            d_feat.row_mut(i)[j] += scale * d_cent.get(k, j);
        }
    }
    Ok((loss, d_feat))
}

/// Backbone with adapters ready for adaptation (gates closed).
fn with_task_adapters(backbone: &Model, cfg: &AdaptConfig) -> Result<Model> {
    if backbone.has_adapters() && !backbone.gates_on() {
        return Ok(backbone.clone());
    }
    backbone.fold_adapters().attach_adapters(&cfg.spec(), cfg.seed)
}

/// Trains task-specific adapters on the support set, then classifies the query.
pub fn adapt_task(backbone: &Model, episode: &Episode, cfg: &AdaptConfig) -> Result<Adaptation> {
    if episode.support.is_empty() || episode.query.is_empty() {
        return Err(Error::InsufficientData("episode has an empty support or query set".into()));
    }
    if episode
        .query
        .labels
        .iter()
        .any(|y| !episode.support.labels.contains(y))
    {
        return Err(Error::Contract("query class missing from support".into()));
    }
    if cfg.steps == 0 {
        let plain = backbone.fold_adapters();
        let s = extract_features(&plain, &episode.support.inputs)?;
        let q = extract_features(&plain, &episode.query.inputs)?;
        let predictions = ncc_classify(&s, &episode.support.labels, &q)?;
        return Ok(Adaptation {
            model: plain,
            predictions,
            support_loss: Vec::new(),
        });
    }
    if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidConfig("adaptation needs lr > 0 and momentum in [0, 1)".into()));
    }
    let mut model = with_task_adapters(backbone, cfg)?.set_gates(true)?;
    let adapters = model.layout().adapters;
    let mut params = model.param_vector();
    let mut velocity = vec![0.0; params.len()];
    let mut support_loss = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let feats = model.features(&episode.support.inputs)?;
        let (loss, d_feat) = prototype_loss(&feats, &episode.support.labels)?;
        if !loss.is_finite() {
            return Err(Error::non_finite(format!("adaptation loss at step {step}")));
        }
        support_loss.push(loss);
        let mut grad = model.feature_backward(&episode.support.inputs, d_feat)?;
        for (i, g) in grad.iter_mut().enumerate() {
            if !adapters.contains(&i) {
                *g = 0.0;
            }
        }
        sgd_step(&mut params, &grad, cfg.lr, cfg.momentum, &mut velocity)?;
        model.set_params(&params)?;
    }
    let s = model.features(&episode.support.inputs)?;
    let q = model.features(&episode.query.inputs)?;
    let predictions = ncc_classify(&s, &episode.support.labels, &q)?;
    Ok(Adaptation {
        model,
        predictions,
        support_loss,
    })
}
