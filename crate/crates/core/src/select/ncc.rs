use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Per-class feature means, keyed and ordered by class ID.
#[derive(Clone, Debug, PartialEq)]
pub struct Centroids {
    pub classes: Vec<usize>,
    pub means: Matrix,
    pub counts: Vec<usize>,
}

pub fn centroids(features: &Matrix, labels: &[usize]) -> Result<Centroids> {
    if features.rows() == 0 {
        return Err(Error::InsufficientData("empty support set".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::Shape("support features and labels differ in length".into()));
    }
    let mut acc: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (row, &y) in features.iter_rows().zip(labels) {
        let e = acc
            .entry(y)
            .or_insert_with(|| (vec![0.0; features.cols()], 0));
        for (s, v) in e.0.iter_mut().zip(row) {
            *s += v;
        }
        e.1 += 1;
    }
    let mut classes = Vec::with_capacity(acc.len());
    let mut counts = Vec::with_capacity(acc.len());
    let mut data = Vec::with_capacity(acc.len() * features.cols());
    for (c, (sum, k)) in acc {
        classes.push(c);
        counts.push(k);
        data.extend(sum.into_iter().map(|s| s / k as f64));
    }
    let means = Matrix::from_vec(classes.len(), features.cols(), data)?;
    Ok(Centroids {
        classes,
        means,
        counts,
    })
}

/// Squared Euclidean distance from every query row to every centroid.
pub fn squared_distances(query: &Matrix, centroids: &Centroids) -> Matrix {
    let mut d = Matrix::zeros(query.rows(), centroids.classes.len());
    for (i, q) in query.iter_rows().enumerate() {
        for (k, c) in centroids.means.iter_rows().enumerate() {
            d.set(i, k, q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    d
}

/// Nearest-centroid labels; ties go to the smallest class ID.
pub fn ncc_classify(support: &Matrix, support_labels: &[usize], query: &Matrix) -> Result<Vec<usize>> {
    if support.cols() != query.cols() {
        return Err(Error::Shape("support and query feature widths differ".into()));
    }
    let c = centroids(support, support_labels)?;
    let d = squared_distances(query, &c);
    Ok(d.iter_rows()
        .map(|row| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] < row[best] {
                    best = k;
                }
            }
            c.classes[best]
        })
        .collect())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}
