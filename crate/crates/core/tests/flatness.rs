use ffsc_core::flatness::{
    default_hvp_step, hessian_trace, hvp, landscape_slice, random_directions, top_eigenvalues, SliceConfig, TraceMode,
};
use ffsc_core::nn::{dot, Matrix};
use ffsc_core::objective::toy::Quadratic;
use ffsc_core::objective::ModelObjective;
use ffsc_core::{rng, Activation, Batch, Model};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn small_problem(seed: u64) -> (Model, Batch) {
    let model = Model::new(&[3, 4, 3], Activation::Tanh, seed).unwrap();
    let mut r = rng::stream(seed, 1);
    let x = (0..24).map(|_| r.random_range(-1.5..1.5)).collect();
    let batch = Batch::new(Matrix::from_vec(8, 3, x).unwrap(), (0..8).map(|i| i % 3).collect()).unwrap();
    (model, batch)
}

fn random_vec(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn hutchinson_converges_to_exact_trace() {
    let (model, batch) = small_problem(4);
    let obj = ModelObjective::new(&model, &batch);
    let theta = model.param_vector();
    let h = default_hvp_step(&theta);
    let exact = hessian_trace(&obj, &theta, TraceMode::Exact, 0, h).unwrap();
    assert!(exact.exact);
    let est = hessian_trace(&obj, &theta, TraceMode::Rademacher(1000), 3, h).unwrap();
    assert!(
        (est.estimate - exact.estimate).abs() < 3.0 * est.stderr,
        "{} vs {} (stderr {})",
        est.estimate,
        exact.estimate,
        est.stderr
    );
}

#[test]
fn power_iteration_matches_dense_solver_on_mlp_hessian() {
    // Assemble the finite-difference Hessian column by column and compare.
    let (model, batch) = small_problem(8);
    let obj = ModelObjective::new(&model, &batch);
    let theta = model.param_vector();
    let n = theta.len();
    let h = default_hvp_step(&theta);
    let mut cols = Vec::with_capacity(n * n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.extend(hvp(&obj, &theta, &e, h).unwrap());
    }
    let m = DMatrix::from_column_slice(n, n, &cols);
    let sym = (&m + m.transpose()) * 0.5;
    let mut oracle: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    oracle.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let got = top_eigenvalues(&obj, &theta, 2, 5000, 1e-12, 1, h).unwrap();
    for k in 0..2 {
        assert!((got.values[k] - oracle[k]).abs() < 1e-4 * (1.0 + oracle[k].abs()), "{:?} vs {:?}", got.values, &oracle[..2]);
    }
}

#[test]
fn slice_center_and_dominance() {
    let q = Quadratic::diagonal(&[1.0, 3.0, 0.5]);
    let theta = [0.2, -0.1, 0.4];
    let dirs = random_directions(3, 2, 5).unwrap();
    let cfg = SliceConfig {
        half_range: 0.5,
        steps: 7,
        weight_decay: 0.0,
        sam_rho: Some(0.1),
    };
    let grid = landscape_slice(&q, &theta, &dirs, &cfg).unwrap();
    let center = grid.center();
    assert_eq!((center.c1, center.c2), (0.0, 0.0));
    assert_eq!(center.erm_loss, 0.5 * (0.04 + 3.0 * 0.01 + 0.5 * 0.16));
    for p in &grid.points {
        assert!(p.sam_loss.unwrap() >= p.erm_loss);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hvp_is_linear_and_symmetric(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (model, batch) = small_problem(seed);
        let obj = ModelObjective::new(&model, &batch);
        let theta = model.param_vector();
        let h = default_hvp_step(&theta);
        let mut r = rng::stream(seed, 2);
        let u = random_vec(&mut r, theta.len());
        let v = random_vec(&mut r, theta.len());
        let hu = hvp(&obj, &theta, &u, h).unwrap();
        let hv = hvp(&obj, &theta, &v, h).unwrap();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let hmix = hvp(&obj, &theta, &mix, h).unwrap();
        let scale = 1.0 + hu.iter().chain(&hv).map(|x| x.abs()).fold(0.0, f64::max) * (a.abs() + b.abs());
        for k in 0..theta.len() {
            prop_assert!((hmix[k] - a * hu[k] - b * hv[k]).abs() < 1e-6 * scale);
        }
        let (uhv, vhu) = (dot(&u, &hv), dot(&v, &hu));
        prop_assert!((uhv - vhu).abs() < 1e-6 * (1.0 + uhv.abs()));
    }

    #[test]
    fn exact_trace_of_random_quadratic(seed in any::<u64>(), n in 1usize..20) {
        let mut r = rng::stream(seed, 3);
        let h = random_vec(&mut r, n * n);
        let q = Quadratic::dense(n, &h).unwrap();
        let trace: f64 = (0..n).map(|i| q.hessian()[i * n + i]).sum();
        let est = hessian_trace(&q, &random_vec(&mut r, n), TraceMode::Exact, 0, 1e-4).unwrap();
        prop_assert!((est.estimate - trace).abs() < 1e-8);
    }
}
