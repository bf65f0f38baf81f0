//! Flatness-aware backbone training, fusion, selection and adaptation for
//! few-shot classification on small MLPs.
//!
//! The pipeline: train a backbone with SAM ([`optim`]), fine-tune copies per
//! source domain and store them in a [`fusion::BackboneBank`], pick one per
//! task by PARC score ([`select`]), adapt gated residual adapters on the
//! support set and classify the query by nearest centroid. [`flatness`]
//! measures curvature and domain divergence; [`eval`] runs the episodic
//! protocol and the statistics.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod flatness;
pub mod fusion;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod select;

pub use data::{Domain, Episode, EpisodeProtocol, GeneratorSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport, TTestResult};
pub use flatness::{BoundReport, FlatnessReport};
pub use fusion::{BackboneBank, NamedBackbone, Provenance};
pub use nn::{Activation, AdapterKind, AdapterSpec, Batch, Matrix, Model};
pub use objective::Objective;
pub use optim::{ObjectiveKind, TrainConfig};
pub use select::{AdaptConfig, SelectionReport};
