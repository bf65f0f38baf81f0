//! Transferability scoring, backbone selection, nearest-centroid
//! classification and task adaptation.

mod adapt;
mod ncc;
mod parc;
mod selection;

pub use adapt::{adapt_task, prototype_loss, AdaptConfig, Adaptation};
pub use ncc::{accuracy, centroids, ncc_classify, squared_distances, Centroids};
pub use parc::{average_ranks, parc_score, pearson, spearman};
pub use selection::{
    extract_features, score_backbone, select_backbone, BackboneScore, FeatureMatrix, SelectionReport,
};
