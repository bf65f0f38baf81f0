use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};

/// Parameters of an isotropic Gaussian mixture with equal class weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl GeneratorSpec {
    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }
}

/// A labeled sample collection from one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub samples: Matrix,
    pub labels: Vec<usize>,
    pub class_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// `(rows, cols)` for image data loaded from IDX files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_shape: Option<(usize, usize)>,
}

impl Domain {
    pub fn new(
        name: impl Into<String>,
        samples: Matrix,
        labels: Vec<usize>,
        generator: Option<GeneratorSpec>,
    ) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::InsufficientData("domain has no samples".into()));
        }
        if samples.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                samples.rows(),
                labels.len()
            )));
        }
        let mut class_ids = labels.clone();
        class_ids.sort_unstable();
        class_ids.dedup();
        Ok(Self {
            name: name.into(),
            samples,
            labels,
            class_ids,
            generator,
            image_shape: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.rows() == 0 || self.samples.rows() != self.labels.len() {
            return Err(Error::Shape(format!("domain `{}` is malformed", self.name)));
        }
        if self.labels.iter().any(|y| self.class_ids.binary_search(y).is_err()) {
            return Err(Error::Shape(format!(
                "domain `{}` has labels outside its class set",
                self.name
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Position of `class_id` in the sorted class set.
    pub fn class_index(&self, class_id: usize) -> Option<usize> {
        self.class_ids.binary_search(&class_id).ok()
    }

    /// Labels mapped to `0..num_classes`, for training a classification head.
    pub fn local_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|y| self.class_index(*y).expect("label in class set"))
            .collect()
    }

    /// Sample indices of each class, aligned with `class_ids`.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &y) in self.labels.iter().enumerate() {
            by.entry(y).or_default().push(i);
        }
        self.class_ids
            .iter()
            .map(|c| by.remove(c).unwrap_or_default())
            .collect()
    }

    /// Batch with the original (global) class IDs.
    pub fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.samples.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn full_batch(&self) -> Batch {
        Batch {
            inputs: self.samples.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Batch with labels mapped to class positions.
    pub fn local_batch(&self, idx: &[usize]) -> Batch {
        Batch {
            inputs: self.samples.select_rows(idx),
            labels: idx
                .iter()
                .map(|&i| self.class_index(self.labels[i]).expect("label in class set"))
                .collect(),
        }
    }

    /// Sub-domain over `idx`, keeping the full class set.
    pub fn subset(&self, idx: &[usize]) -> Domain {
        Domain {
            name: self.name.clone(),
            samples: self.samples.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_ids: self.class_ids.clone(),
            generator: self.generator.clone(),
            image_shape: self.image_shape,
        }
    }

    /// Union of several domains under a new name.
    pub fn pooled(name: impl Into<String>, domains: &[Domain]) -> Result<Domain> {
        let first = domains
            .first()
            .ok_or_else(|| Error::InsufficientData("nothing to pool".into()))?;
        let dim = first.dim();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for d in domains {
            if d.dim() != dim {
                return Err(Error::Shape("pooled domains differ in dimension".into()));
            }
            data.extend_from_slice(d.samples.data());
            labels.extend_from_slice(&d.labels);
        }
        let n = labels.len();
        Domain::new(name, Matrix::from_vec(n, dim, data)?, labels, None)
    }
}

/// Fails unless no class ID appears in more than one domain.
pub fn check_disjoint_classes(domains: &[Domain]) -> Result<()> {
    let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
    for d in domains {
        for &c in &d.class_ids {
            if let Some(prev) = owner.insert(c, &d.name) {
                return Err(Error::InvalidConfig(format!(
                    "class {c} appears in both `{prev}` and `{}`",
                    d.name
                )));
            }
        }
    }
    Ok(())
}
