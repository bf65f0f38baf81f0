mod common;

use ffsc_core::nn::Matrix;
use ffsc_core::objective::toy::Quadratic;
use ffsc_core::objective::ModelObjective;
use ffsc_core::optim::{cosine_lr, erm_objective, sam_gradient, sam_step, train};
use ffsc_core::{Activation, Batch, Model, ObjectiveKind, TrainConfig};
use proptest::prelude::*;

fn batch(n: usize, dim: usize, classes: usize, xs: &[f64]) -> Batch {
    let x: Vec<f64> = (0..n * dim).map(|i| xs[i % xs.len()] * (1.0 + i as f64 * 0.01)).collect();
    Batch::new(Matrix::from_vec(n, dim, x).unwrap(), (0..n).map(|i| i % classes).collect()).unwrap()
}

#[test]
fn sam_on_a_quadratic_matches_closed_form() {
    // L = ½θᵀHθ, g = Hθ, ε = ρg/‖g‖, SAM gradient = H(θ + ε).
    let q = Quadratic::diagonal(&[1.0, 4.0]);
    let theta = [1.0, 0.5];
    let rho = 0.1;
    let out = sam_step(&q, &theta, rho, 0.0, None).unwrap();
    let g = [1.0, 2.0];
    let gn = 5f64.sqrt();
    let eps = [rho * g[0] / gn, rho * g[1] / gn];
    let expect = [theta[0] + eps[0], 4.0 * (theta[1] + eps[1])];
    for k in 0..2 {
        assert!((out.perturbation[k] - eps[k]).abs() < 1e-15);
        assert!((out.grad[k] - expect[k]).abs() < 1e-14);
    }
}

#[test]
fn training_is_reproducible() {
    let d = &common::domains(4, 1, 3, 10, 0.0, 3)[0];
    let model = Model::new(&[4, 8, 3], Activation::Tanh, 1).unwrap();
    let cfg = TrainConfig {
        total_iterations: 120,
        restart_period: 40,
        objective: ObjectiveKind::Sam,
        seed: 5,
        ..TrainConfig::default()
    };
    let (m1, h1) = train(&model, d, &cfg).unwrap();
    let (m2, h2) = train(&model, d, &cfg).unwrap();
    assert_eq!((&h1.loss, &h1.lr, &h1.grad_norm), (&h2.loss, &h2.lr, &h2.grad_norm));
    assert_eq!(h1.final_params, h2.final_params);
    assert_eq!(m1, m2);
    let (_, h3) = train(&model, d, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(h1.loss, h3.loss);
}

#[test]
fn training_lowers_the_loss() {
    let d = &common::domains(4, 1, 3, 20, 0.0, 4)[0];
    let model = Model::new(&[4, 8, 3], Activation::Tanh, 2).unwrap();
    let cfg = TrainConfig {
        total_iterations: 300,
        restart_period: 300,
        ..TrainConfig::default()
    };
    let before = model.forward_backward(&d.local_batch(&(0..d.len()).collect::<Vec<_>>()), 0.0).unwrap().loss;
    let (trained, _) = train(&model, d, &cfg).unwrap();
    let after = trained.forward_backward(&d.local_batch(&(0..d.len()).collect::<Vec<_>>()), 0.0).unwrap().loss;
    assert!(after < 0.5 * before, "{before} -> {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sam_with_zero_radius_is_erm(seed in any::<u64>(), alpha in 0.0f64..0.1,
                                   xs in proptest::collection::vec(-2.0f64..2.0, 4..16)) {
        let model = Model::new(&[3, 5, 3], Activation::Tanh, seed).unwrap();
        let b = batch(6, 3, 3, &xs);
        let (ls, gs) = sam_gradient(&model, &b, 0.0, alpha).unwrap();
        let (le, ge) = erm_objective(&model, &b, alpha).unwrap();
        prop_assert_eq!(ls.to_bits(), le.to_bits());
        prop_assert_eq!(gs, ge);
    }

    #[test]
    fn perturbation_has_radius_rho(seed in any::<u64>(), rho in 1e-4f64..2.0,
                                   xs in proptest::collection::vec(-2.0f64..2.0, 4..16)) {
        let model = Model::new(&[3, 4, 2], Activation::Tanh, seed).unwrap();
        let b = batch(5, 3, 2, &xs);
        let obj = ModelObjective::new(&model, &b);
        let out = sam_step(&obj, &model.param_vector(), rho, 0.0, None).unwrap();
        prop_assume!(out.base_grad_norm > 0.0);
        let n = out.perturbation.iter().map(|e| e * e).sum::<f64>().sqrt();
        prop_assert!((n - rho).abs() / rho < 1e-12);
    }

    #[test]
    fn schedule_stays_in_bounds_and_repeats(t in 0usize..100_000, period in 1usize..500,
                                            base in 1e-4f64..1.0, frac in 0.0f64..1.0) {
        let cfg = TrainConfig { base_lr: base, min_lr: base * frac, restart_period: period, ..TrainConfig::default() };
        let lr = cosine_lr(t, &cfg);
        prop_assert!(lr >= cfg.min_lr && lr <= cfg.base_lr);
        prop_assert_eq!(lr, cosine_lr(t + period, &cfg));
        prop_assert_eq!(cosine_lr(t - t % period, &cfg), base);
    }
}
