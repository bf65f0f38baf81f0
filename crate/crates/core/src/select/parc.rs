//! Pairwise annotation representation comparison.
//!
//! Feature distances `1 − pearson(fᵢ, fⱼ)` and label distances `1 − [yᵢ = yⱼ]`
//! are compared over all pairs `i > j` by Spearman rank correlation (average
//! ranks for ties), scaled to `[−100, 100]`.

use crate::error::{Error, Result};
use crate::nn::Matrix;

fn centered_unit_rows(features: &Matrix) -> Result<Vec<Vec<f64>>> {
    features
        .iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let c: Vec<f64> = row.iter().map(|v| v - mean).collect();
            let n = crate::nn::norm(&c);
            if !(n > 1e-12 * (1.0 + mean.abs())) || !n.is_finite() {
                return Err(Error::DegenerateFeatures(format!(
                    "feature row {i} is constant; Pearson correlation undefined"
                )));
            }
            Ok(c.into_iter().map(|v| v / n).collect())
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

pub fn parc_score(features: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = features.rows();
    if n != labels.len() {
        return Err(Error::Shape(format!("{n} feature rows but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::InsufficientData("PARC needs at least 2 samples".into()));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::DegenerateLabels("PARC needs at least 2 classes".into()));
    }
    if !features.is_finite() {
        return Err(Error::DegenerateFeatures("non-finite features".into()));
    }
    let rows = centered_unit_rows(features)?;
    let pairs = n * (n - 1) / 2;
    let mut feat_dist = Vec::with_capacity(pairs);
    let mut label_dist = Vec::with_capacity(pairs);
    for i in 1..n {
        for j in 0..i {
            feat_dist.push(1.0 - crate::nn::dot(&rows[i], &rows[j]));
            label_dist.push(if labels[i] == labels[j] { 0.0 } else { 1.0 });
        }
    }
    // Label distances vary (two classes exist), so only constant feature
    // distances can leave the correlation undefined.
    let rho = spearman(&feat_dist, &label_dist)
        .ok_or_else(|| Error::DegenerateFeatures("all pairwise feature distances equal".into()))?;
    Ok((100.0 * rho).clamp(-100.0, 100.0))
}
