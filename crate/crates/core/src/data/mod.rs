//! Domains, synthetic generation, IDX ingestion and episodic sampling.

mod domain;
mod episode;
mod idx;
mod synthetic;

pub use domain::{check_disjoint_classes, Domain, GeneratorSpec};
pub use episode::{sample_episode, stratified_split, Episode, EpisodeProtocol};
pub use idx::{encode_idx, load_idx, parse_idx, write_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use synthetic::{gen_synthetic_domains, sample_generator, shift_direction, DomainSpec, SyntheticSpec};
