//! Differentiable MLP backbone with gated task-specific adapters.

mod adapter;
mod gradcheck;
mod matrix;
mod model;

pub use adapter::{Adapter, AdapterKind, AdapterSpec};
pub use gradcheck::gradient_check;
pub use matrix::{dot, norm, Matrix};
pub use model::{Activation, Architecture, Batch, Dense, ForwardBackward, Model, ParamLayout};

pub(crate) use model::{add_weight_decay, softmax_cross_entropy};
