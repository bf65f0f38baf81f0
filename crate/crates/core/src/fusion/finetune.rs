use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::nn::{AdapterKind, AdapterSpec, Model};
use crate::optim::{train, train_masked, TrainConfig};

use super::FinetuneMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Vanilla,
    Lora,
}

impl From<FusionMode> for FinetuneMode {
    fn from(m: FusionMode) -> Self {
        match m {
            FusionMode::Vanilla => FinetuneMode::Vanilla,
            FusionMode::Lora => FinetuneMode::Lora,
        }
    }
}

/// Fine-tunes a copy of `base` on `dataset` with a fresh head.
///
/// `Vanilla` updates every backbone parameter. `Lora` attaches rank-`rank`
/// adapters to each backbone layer, opens the gates, and trains only the
/// adapters and the head; the backbone weights are bitwise unchanged and the
/// adapters stay factored.
pub fn finetune(base: &Model, dataset: &Domain, cfg: &TrainConfig, mode: FusionMode, rank: usize) -> Result<Model> {
    if dataset.num_classes() < 2 {
        return Err(Error::Shape(format!(
            "class-count mismatch: `{}` has {} class(es), a head needs at least 2",
            dataset.name,
            dataset.num_classes()
        )));
    }
    if dataset.dim() != base.input_dim() {
        return Err(Error::Shape(format!(
            "`{}` has dimension {}, backbone expects {}",
            dataset.name,
            dataset.dim(),
            base.input_dim()
        )));
    }
    let plain = base.fold_adapters();
    let headed = plain.with_fresh_head(dataset.num_classes(), cfg.seed)?;
    match mode {
        FusionMode::Vanilla => Ok(train(&headed, dataset, cfg)?.0),
        FusionMode::Lora => {
            let adapted = headed
                .attach_adapters(&AdapterSpec::low_rank(rank), cfg.seed)?
                .set_gates(true)?;
            let layout = adapted.layout();
            let mut mask = vec![false; layout.total];
            mask[layout.head].iter_mut().for_each(|m| *m = true);
            mask[layout.adapters].iter_mut().for_each(|m| *m = true);
            Ok(train_masked(&adapted, dataset, cfg, Some(&mask))?.0)
        }
    }
}

/// Folds low-rank adapters into the weights: `W' = W + B·A`.
pub fn merge_lora(model: &Model) -> Result<Model> {
    match model.adapter_kind() {
        Some(AdapterKind::LowRank) => Ok(model.fold_adapters()),
        _ => Err(Error::State("merge_lora needs a model with low-rank adapters".into())),
    }
}
