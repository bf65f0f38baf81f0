//! Domain divergence `Div(P, Q) = 2·sup_A |P(A) − Q(A)| = ∫|p − q|`, which
//! ranges over `[0, 2]`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::data::{sample_generator, Domain, GeneratorSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, Matrix, Model};
use crate::optim::{train, ObjectiveKind, TrainConfig};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceMethod {
    /// Uses the stored generator densities.
    AnalyticGaussian,
    /// Held-out accuracy of a domain classifier, a lower bound.
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub div: f64,
    /// `analytic_gaussian/closed_form`, `analytic_gaussian/importance` or
    /// `monte_carlo/classifier_lower_bound`, plus `/identical` for equal specs.
    pub method: String,
    /// Samples drawn; zero for closed forms.
    pub n: usize,
}

/// Divergence between the input distributions of two domains.
pub fn tv_divergence(
    a: &Domain,
    b: &Domain,
    method: DivergenceMethod,
    n: usize,
    seed: u64,
) -> Result<DivergenceEstimate> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "domains `{}` and `{}` have different input dimensions",
            a.name, b.name
        )));
    }
    match method {
        DivergenceMethod::AnalyticGaussian => {
            let (ga, gb) = match (&a.generator, &b.generator) {
                (Some(ga), Some(gb)) => (ga, gb),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "analytic divergence needs generator specs for `{}` and `{}`",
                        a.name, b.name
                    )))
                }
            };
            analytic_divergence(ga, gb, n, seed)
        }
        DivergenceMethod::MonteCarlo => classifier_divergence(a, b, n, seed),
    }
}

/// Exact for single isotropic Gaussians of equal width, otherwise an
/// importance-sampled integral of the known densities.
pub fn analytic_divergence(
    a: &GeneratorSpec,
    b: &GeneratorSpec,
    n: usize,
    seed: u64,
) -> Result<DivergenceEstimate> {
    check_spec(a)?;
    check_spec(b)?;
    if a.dim() != b.dim() {
        return Err(Error::Shape("generator specs have different dimensions".into()));
    }
    if same_distribution(a, b) {
        return Ok(DivergenceEstimate {
            div: 0.0,
            method: "analytic_gaussian/identical".into(),
            n: 0,
        });
    }
    if a.class_means.len() == 1 && b.class_means.len() == 1 && a.sigma == b.sigma {
        let dist = a.class_means[0]
            .iter()
            .zip(&b.class_means[0])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        // Project onto the mean difference: 2·(2Φ(d/2σ) − 1).
        let div = 2.0 * erf(dist / (2.0 * std::f64::consts::SQRT_2 * a.sigma));
        return Ok(DivergenceEstimate {
            div: div.clamp(0.0, 2.0),
            method: "analytic_gaussian/closed_form".into(),
            n: 0,
        });
    }
    if n == 0 {
        return Err(Error::InvalidConfig("mixture divergence needs n >= 1 samples".into()));
    }
    // E_m[2|p − q|/(p + q)] with m = (p + q)/2.
    let mut r = rng::stream(seed, 0xd17);
    let dim = a.dim();
    let mut x = vec![0.0; dim];
    let mut total = 0.0;
    for _ in 0..n {
        let spec = if r.random::<bool>() { a } else { b };
        let mean = &spec.class_means[r.random_range(0..spec.class_means.len())];
        for (xi, m) in x.iter_mut().zip(mean) {
            let z: f64 = StandardNormal.sample(&mut r);
            *xi = m + spec.sigma * z;
        }
        let lp = log_density(a, &x);
        let lq = log_density(b, &x);
        let ratio = (-(lp - lq).abs()).exp();
        total += 2.0 * (1.0 - ratio) / (1.0 + ratio);
    }
    Ok(DivergenceEstimate {
        div: (total / n as f64).clamp(0.0, 2.0),
        method: "analytic_gaussian/importance".into(),
        n,
    })
}

fn check_spec(g: &GeneratorSpec) -> Result<()> {
    if g.class_means.is_empty() || !(g.sigma > 0.0) {
        return Err(Error::InvalidConfig("generator spec needs means and sigma > 0".into()));
    }
    let d = g.dim();
    if g.class_means.iter().any(|m| m.len() != d) {
        return Err(Error::Shape("generator means differ in length".into()));
    }
    Ok(())
}

fn same_distribution(a: &GeneratorSpec, b: &GeneratorSpec) -> bool {
    if a.sigma != b.sigma || a.class_means.len() != b.class_means.len() {
        return false;
    }
    let mut ma = a.class_means.clone();
    let mut mb = b.class_means.clone();
    let key = |x: &Vec<f64>, y: &Vec<f64>| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal);
    ma.sort_by(key);
    mb.sort_by(key);
    ma == mb
}

/// Log density up to the `−(d/2)·ln 2π` constant shared by all specs.
fn log_density(g: &GeneratorSpec, x: &[f64]) -> f64 {
    let s2 = g.sigma * g.sigma;
    let terms: Vec<f64> = g
        .class_means
        .iter()
        .map(|m| -x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * s2))
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    lse - (g.class_means.len() as f64).ln() - x.len() as f64 * g.sigma.ln()
}

/// Trains a small network to tell the domains apart on half of the samples and
/// converts held-out accuracy into `2·(2·acc − 1)`, clipped to `[0, 2]`.
/// Balanced accuracy never exceeds `(1 + TV)/2`, so this is a lower bound.
fn classifier_divergence(a: &Domain, b: &Domain, n: usize, seed: u64) -> Result<DivergenceEstimate> {
    let (xa, xb) = match (&a.generator, &b.generator) {
        (Some(ga), Some(gb)) if n > 0 => (
            sample_generator(ga, n, &mut rng::stream(seed, 0xa)),
            sample_generator(gb, n, &mut rng::stream(seed, 0xb)),
        ),
        _ => {
            let m = if n == 0 { a.len().min(b.len()) } else { n.min(a.len()).min(b.len()) };
            (
                subsample(&a.samples, m, &mut rng::stream(seed, 0xa)),
                subsample(&b.samples, m, &mut rng::stream(seed, 0xb)),
            )
        }
    };
    let m = xa.rows();
    if m < 4 {
        return Err(Error::InsufficientData("need at least 4 samples per domain".into()));
    }
    let half = m / 2;
    let dim = xa.cols();
    let stack = |lo: usize, hi: usize| {
        let mut rows = Vec::with_capacity(2 * (hi - lo) * dim);
        rows.extend_from_slice(&xa.data()[lo * dim..hi * dim]);
        rows.extend_from_slice(&xb.data()[lo * dim..hi * dim]);
        let labels = (0..2 * (hi - lo)).map(|i| usize::from(i >= hi - lo)).collect::<Vec<_>>();
        (Matrix::from_vec(2 * (hi - lo), dim, rows).expect("shape"), labels)
    };
    let (mut x_train, y_train) = stack(0, half);
    let (mut x_test, y_test) = stack(half, m);

    // Standardize with training statistics.
    let rows = x_train.rows() as f64;
    for j in 0..dim {
        let mean = x_train.iter_rows().map(|r| r[j]).sum::<f64>() / rows;
        let var = x_train.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / rows;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for x in [&mut x_train, &mut x_test] {
            for i in 0..x.rows() {
                let v = (x.get(i, j) - mean) / sd;
                x.set(i, j, v);
            }
        }
    }

    let train_domain = Domain::new("divergence", x_train, y_train, None)?;
    let model = Model::new(&[dim, 32, 2], Activation::Tanh, rng::mix(seed, 0xc1))?;
    let iterations = 3000;
    let cfg = TrainConfig {
        batch_size: 128,
        base_lr: 0.05,
        min_lr: 0.0,
        total_iterations: iterations,
        restart_period: iterations,
        momentum: 0.9,
        weight_decay: 0.0,
        rho: 0.0,
        objective: ObjectiveKind::Erm,
        seed: rng::mix(seed, 0xc2),
    };
    let (model, _) = train(&model, &train_domain, &cfg)?;
    let logits = model.forward(&x_test)?;
    let correct = logits
        .iter_rows()
        .zip(&y_test)
        .filter(|(r, &y)| usize::from(r[1] > r[0]) == y)
        .count();
    let acc = correct as f64 / y_test.len() as f64;
    Ok(DivergenceEstimate {
        div: (2.0 * (2.0 * acc - 1.0)).clamp(0.0, 2.0),
        method: "monte_carlo/classifier_lower_bound".into(),
        n: m,
    })
}

fn subsample(x: &Matrix, m: usize, r: &mut rng::Rng) -> Matrix {
    let idx = rand::seq::index::sample(r, x.rows(), m).into_vec();
    x.select_rows(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(mean: Vec<f64>) -> GeneratorSpec {
        GeneratorSpec {
            class_means: vec![mean],
            sigma: 1.0,
        }
    }

    #[test]
    fn identical_specs_give_exact_zero() {
        let g = GeneratorSpec {
            class_means: vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            sigma: 0.7,
        };
        let mut h = g.clone();
        h.class_means.reverse();
        assert_eq!(analytic_divergence(&g, &h, 100, 0).unwrap().div, 0.0);
    }

    #[test]
    fn closed_form_two_gaussians() {
        let d = analytic_divergence(&single(vec![0.0, 0.0]), &single(vec![0.0, 2.0]), 0, 0).unwrap();
        assert_eq!(d.method, "analytic_gaussian/closed_form");
        assert!((d.div - 1.365_378_984).abs() < 1e-8, "{}", d.div);
    }

    #[test]
    fn importance_estimate_agrees_with_closed_form() {
        // Same pair, written as two-component mixtures with repeated means.
        let a = GeneratorSpec {
            class_means: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            sigma: 1.0,
        };
        let b = GeneratorSpec {
            class_means: vec![vec![2.0, 0.0], vec![2.0, 0.0]],
            sigma: 1.0,
        };
        let d = analytic_divergence(&a, &b, 200_000, 3).unwrap();
        assert_eq!(d.method, "analytic_gaussian/importance");
        assert!((d.div - 1.365_378_984).abs() < 5e-3, "{}", d.div);
    }

    #[test]
    fn analytic_requires_generators() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let a = Domain::new("a", x.clone(), vec![0, 1], None).unwrap();
        let b = Domain::new("b", x, vec![0, 1], None).unwrap();
        assert!(matches!(
            tv_divergence(&a, &b, DivergenceMethod::AnalyticGaussian, 10, 0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
