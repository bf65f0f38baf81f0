use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::domain::Domain;
use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::rng;

/// Uniform varying-way varying-shot sampler settings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeProtocol {
    pub min_way: usize,
    pub max_way: usize,
    pub min_shot: usize,
    pub max_shot: usize,
    pub query_per_class: usize,
    pub seed: u64,
}

impl Default for EpisodeProtocol {
    fn default() -> Self {
        Self {
            min_way: 2,
            max_way: 5,
            min_shot: 1,
            max_shot: 5,
            query_per_class: 5,
            seed: 0,
        }
    }
}

impl EpisodeProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.min_way < 2 || self.min_way > self.max_way {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= min_way <= max_way, got {}..{}",
                self.min_way, self.max_way
            )));
        }
        if self.min_shot < 1 || self.min_shot > self.max_shot {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= min_shot <= max_shot, got {}..{}",
                self.min_shot, self.max_shot
            )));
        }
        if self.query_per_class < 1 {
            return Err(Error::InvalidConfig("query_per_class must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// One few-shot task. Labels in both batches are the domain's class IDs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub support: Batch,
    pub query: Batch,
    pub way: usize,
    pub classes: Vec<usize>,
    pub shots: Vec<usize>,
    pub domain_name: String,
    pub support_indices: Vec<usize>,
    pub query_indices: Vec<usize>,
}

/// Samples task `task_index`; the result depends only on `(protocol.seed, task_index)`.
pub fn sample_episode(domain: &Domain, protocol: &EpisodeProtocol, task_index: u64) -> Result<Episode> {
    protocol.validate()?;
    let need = protocol.min_shot + protocol.query_per_class;
    let by_class = domain.indices_by_class();
    let eligible: Vec<usize> = (0..by_class.len())
        .filter(|&k| by_class[k].len() >= need)
        .collect();
    if eligible.len() < protocol.min_way {
        return Err(Error::InsufficientData(format!(
            "domain `{}` has {} classes with >= {need} samples, protocol needs {}",
            domain.name,
            eligible.len(),
            protocol.min_way
        )));
    }
    let mut r = rng::stream(protocol.seed, task_index);
    let upper = protocol.max_way.min(eligible.len());
    let way = r.random_range(protocol.min_way..=upper);
    let mut pool = eligible;
    let (chosen, _) = pool.partial_shuffle(&mut r, way);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();

    let mut support_indices = Vec::new();
    let mut query_indices = Vec::new();
    let mut shots = Vec::with_capacity(way);
    let mut classes = Vec::with_capacity(way);
    for &k in &chosen {
        let mut idx = by_class[k].clone();
        idx.shuffle(&mut r);
        let available = idx.len() - protocol.query_per_class;
        let shot = r
            .random_range(protocol.min_shot..=protocol.max_shot)
            .min(available);
        query_indices.extend_from_slice(&idx[..protocol.query_per_class]);
        support_indices
            .extend_from_slice(&idx[protocol.query_per_class..protocol.query_per_class + shot]);
        shots.push(shot);
        classes.push(domain.class_ids[k]);
    }
    Ok(Episode {
        support: domain.batch(&support_indices),
        query: domain.batch(&query_indices),
        way,
        classes,
        shots,
        domain_name: domain.name.clone(),
        support_indices,
        query_indices,
    })
}

/// Per-class split into `(train, held_out)`.
pub fn stratified_split(domain: &Domain, train_frac: f64, seed: u64) -> Result<(Domain, Domain)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    let mut r = rng::stream(seed, 0x5b1);
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (k, mut idx) in domain.indices_by_class().into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "class {} of `{}` has fewer than 2 samples",
                domain.class_ids[k], domain.name
            )));
        }
        idx.shuffle(&mut r);
        let n_train = ((idx.len() as f64 * train_frac).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        held.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    Ok((domain.subset(&train), domain.subset(&held)))
}
