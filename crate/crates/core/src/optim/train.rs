use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::sam::{erm_step, sam_step};
use super::{cosine_lr, sgd_step, ObjectiveKind, TrainConfig};
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::nn::{norm, Model};
use crate::objective::ModelObjective;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub final_params: Vec<f64>,
    pub wall_time_secs: f64,
}

/// Trains every parameter of `model` on `dataset` with its local class indices.
pub fn train(model: &Model, dataset: &Domain, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    train_masked(model, dataset, cfg, None)
}

/// As [`train`], but entries where `trainable` is false never move.
///
/// Batches are drawn uniformly with replacement from a stream keyed by `cfg.seed`.
pub fn train_masked(
    model: &Model,
    dataset: &Domain,
    cfg: &TrainConfig,
    trainable: Option<&[bool]>,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    dataset.validate()?;
    if model.num_classes() != dataset.num_classes() {
        return Err(Error::Shape(format!(
            "head has {} outputs but `{}` has {} classes",
            model.num_classes(),
            dataset.name,
            dataset.num_classes()
        )));
    }
    if let Some(mask) = trainable {
        if mask.len() != model.param_count() {
            return Err(Error::Shape("trainable mask length".into()));
        }
    }
    let started = Instant::now();
    let mut params = model.param_vector();
    let mut velocity = vec![0.0; params.len()];
    let mut history = TrainHistory {
        loss: Vec::with_capacity(cfg.total_iterations),
        lr: Vec::with_capacity(cfg.total_iterations),
        grad_norm: Vec::with_capacity(cfg.total_iterations),
        final_params: Vec::new(),
        wall_time_secs: 0.0,
    };
    let mut sampler = rng::stream(cfg.seed, 0x7261_696e);
    let mut idx = vec![0usize; cfg.batch_size];
    let mut current = model.clone();
    for t in 0..cfg.total_iterations {
        for i in idx.iter_mut() {
            *i = sampler.random_range(0..dataset.len());
        }
        let batch = dataset.local_batch(&idx);
        current.set_params(&params)?;
        let obj = ModelObjective::new(&current, &batch);
        let step = match cfg.objective {
            ObjectiveKind::Erm => erm_step(&obj, &params, cfg.weight_decay, trainable),
            ObjectiveKind::Sam => sam_step(&obj, &params, cfg.rho, cfg.weight_decay, trainable)
                .map(|o| (o.loss, o.grad)),
        };
        let (loss, grad) = step.map_err(|e| Error::Training {
            iteration: t,
            source: Box::new(e),
        })?;
        let lr = cosine_lr(t, cfg);
        sgd_step(&mut params, &grad, lr, cfg.momentum, &mut velocity)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training {
                iteration: t,
                source: Box::new(Error::non_finite("parameters after update")),
            });
        }
        history.loss.push(loss);
        history.lr.push(lr);
        history.grad_norm.push(norm(&grad));
    }
    current.set_params(&params)?;
    history.final_params = params;
    history.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((current, history))
}

/// Fraction of `dataset` the model's head classifies correctly.
pub fn head_accuracy(model: &Model, dataset: &Domain) -> Result<f64> {
    let logits = model.forward(&dataset.samples)?;
    let labels = dataset.local_labels();
    let correct = logits
        .iter_rows()
        .zip(&labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
