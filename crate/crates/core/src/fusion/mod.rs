//! Information fusion by fine-tuning, and the persistent backbone bank.

mod bank;
pub mod checkpoint;
mod finetune;

pub use bank::{BackboneBank, FaultPoint, FinetuneMode, NamedBackbone, Provenance};
pub use checkpoint::CheckpointMeta;
pub use finetune::{finetune, merge_lora, FusionMode};
