#![allow(dead_code)]

use ffsc_core::data::{gen_synthetic_domains, DomainSpec};
use ffsc_core::{Domain, SyntheticSpec};

pub fn spec(dim: usize, domains: usize, classes: usize, per_class: usize, shift: f64) -> SyntheticSpec {
    SyntheticSpec {
        dim,
        sigma: 0.5,
        class_radius: 2.0,
        shift,
        domains: (0..domains)
            .map(|j| DomainSpec {
                name: format!("d{j}"),
                classes,
                samples_per_class: per_class,
                mean_seed: None,
                label_noise: 0.0,
            })
            .collect(),
    }
}

pub fn domains(dim: usize, n: usize, classes: usize, per_class: usize, shift: f64, seed: u64) -> Vec<Domain> {
    gen_synthetic_domains(&spec(dim, n, classes, per_class, shift), seed).unwrap()
}
