//! ERM/SAM objectives, SGD with momentum, cosine-restart schedule, training loop.

mod config;
mod sam;
mod schedule;
mod sgd;
mod train;

pub use config::{ObjectiveKind, TrainConfig};
pub use sam::{erm_objective, erm_step, sam_gradient, sam_step, sam_value_1d, SamOutput};
pub use schedule::cosine_lr;
pub use sgd::sgd_step;
pub use train::{head_accuracy, train, train_masked, TrainHistory};
