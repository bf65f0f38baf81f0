//! Gaussian-mixture domains with a controllable inter-domain shift.
//!
//! Domain `j` has class means `r·uₖ + δ·sⱼ`, where the `uₖ` are unit vectors drawn
//! from the domain's mean seed and `sⱼ` is a unit shift direction (`s₀ = 0`).
//! Samples are `mean + σ·N(0, I)`; class IDs are allocated consecutively so they
//! never collide across domains.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::domain::{Domain, GeneratorSpec};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub sigma: f64,
    #[serde(default = "default_radius")]
    pub class_radius: f64,
    /// Inter-domain shift magnitude δ.
    #[serde(default)]
    pub shift: f64,
    pub domains: Vec<DomainSpec>,
}

fn default_radius() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub classes: usize,
    pub samples_per_class: usize,
    /// Seed for the class means; defaults to one derived from the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_seed: Option<u64>,
    /// Fraction of labels replaced by a different class of the same domain.
    #[serde(default)]
    pub label_noise: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.class_radius > 0.0) {
            return bad("class_radius must be positive".into());
        }
        if !(self.shift >= 0.0) || !self.shift.is_finite() {
            return bad(format!("shift must be non-negative, got {}", self.shift));
        }
        if self.domains.is_empty() {
            return bad("at least one domain required".into());
        }
        for d in &self.domains {
            if d.classes < 2 {
                return bad(format!("domain `{}` needs at least 2 classes", d.name));
            }
            if d.samples_per_class == 0 {
                return bad(format!("domain `{}` needs samples", d.name));
            }
            if !(0.0..1.0).contains(&d.label_noise) {
                return bad(format!("domain `{}` label_noise must be in [0, 1)", d.name));
            }
        }
        Ok(())
    }
}

fn unit_vector(dim: usize, r: &mut rng::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
        let n = crate::nn::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit shift direction of domain `index` (zero for the reference domain).
pub fn shift_direction(dim: usize, seed: u64, index: usize) -> Vec<f64> {
    if index == 0 {
        return vec![0.0; dim];
    }
    unit_vector(dim, &mut rng::stream(rng::mix(seed, 0x5417), index as u64))
}

pub fn gen_synthetic_domains(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Domain>> {
    spec.validate()?;
    let mut next_class = 0usize;
    let mut out = Vec::with_capacity(spec.domains.len());
    for (j, d) in spec.domains.iter().enumerate() {
        let mean_seed = d.mean_seed.unwrap_or_else(|| rng::mix(seed, j as u64));
        let mut mean_rng = rng::stream(mean_seed, 1);
        let shift = shift_direction(spec.dim, seed, j);
        let means: Vec<Vec<f64>> = (0..d.classes)
            .map(|_| {
                unit_vector(spec.dim, &mut mean_rng)
                    .iter()
                    .zip(&shift)
                    .map(|(u, s)| spec.class_radius * u + spec.shift * s)
                    .collect()
            })
            .collect();

        let mut sample_rng = rng::stream(rng::mix(seed, j as u64), 2);
        let mut noise_rng = rng::stream(rng::mix(seed, j as u64), 3);
        let n = d.classes * d.samples_per_class;
        let mut data = Vec::with_capacity(n * spec.dim);
        let mut labels = Vec::with_capacity(n);
        for (c, mean) in means.iter().enumerate() {
            for _ in 0..d.samples_per_class {
                data.extend(mean.iter().map(|m| {
                    let z: f64 = StandardNormal.sample(&mut sample_rng);
                    m + spec.sigma * z
                }));
                let mut label = c;
                if d.label_noise > 0.0 && noise_rng.random::<f64>() < d.label_noise {
                    let other = noise_rng.random_range(0..d.classes - 1);
                    label = if other >= c { other + 1 } else { other };
                }
                labels.push(next_class + label);
            }
        }
        let mut domain = Domain::new(
            d.name.clone(),
            Matrix::from_vec(n, spec.dim, data)?,
            labels,
            Some(GeneratorSpec {
                class_means: means,
                sigma: spec.sigma,
            }),
        )?;
        // Keep every generated class in the class set even if noise emptied one.
        domain.class_ids = (next_class..next_class + d.classes).collect();
        next_class += d.classes;
        out.push(domain);
    }
    Ok(out)
}

/// Draws `n` fresh inputs from a generator.
pub fn sample_generator(gen: &GeneratorSpec, n: usize, r: &mut rng::Rng) -> Matrix {
    let dim = gen.dim();
    let k = gen.class_means.len();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let mean = &gen.class_means[r.random_range(0..k)];
        data.extend(mean.iter().map(|m| {
            let z: f64 = StandardNormal.sample(r);
            m + gen.sigma * z
        }));
    }
    Matrix::from_vec(n, dim, data).expect("sized")
}
