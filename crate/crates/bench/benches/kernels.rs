use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ffsc_core::data::{gen_synthetic_domains, sample_episode, DomainSpec};
use ffsc_core::flatness::{default_hvp_step, hessian_trace, hvp, TraceMode};
use ffsc_core::objective::ModelObjective;
use ffsc_core::optim::sam_gradient;
use ffsc_core::select::{adapt_task, parc_score};
use ffsc_core::{Activation, AdaptConfig, Domain, EpisodeProtocol, Model, SyntheticSpec};

fn domain() -> Domain {
    let spec = SyntheticSpec {
        dim: 16,
        sigma: 0.5,
        class_radius: 2.0,
        shift: 0.0,
        domains: vec![DomainSpec {
            name: "bench".into(),
            classes: 10,
            samples_per_class: 50,
            mean_seed: None,
            label_noise: 0.0,
        }],
    };
    gen_synthetic_domains(&spec, 0).unwrap().remove(0)
}

fn kernels(c: &mut Criterion) {
    let d = domain();
    let model = Model::new(&[16, 32, 32, 10], Activation::Tanh, 0).unwrap();
    let batch = d.local_batch(&(0..64).collect::<Vec<_>>());
    let theta = model.param_vector();
    let h = default_hvp_step(&theta);
    let v = vec![1.0; theta.len()];
    let obj = ModelObjective::new(&model, &batch);

    c.bench_function("forward_backward/64", |b| b.iter(|| model.forward_backward(black_box(&batch), 1e-4).unwrap()));
    c.bench_function("sam_gradient/64", |b| b.iter(|| sam_gradient(&model, black_box(&batch), 0.05, 1e-4).unwrap()));
    c.bench_function("hvp/64", |b| b.iter(|| hvp(&obj, black_box(&theta), &v, h).unwrap()));
    c.bench_function("hutchinson/20", |b| {
        b.iter(|| hessian_trace(&obj, &theta, TraceMode::Rademacher(20), 0, h).unwrap())
    });

    let features = model.features(&d.samples).unwrap();
    let labels = d.local_labels();
    c.bench_function("parc/500", |b| b.iter(|| parc_score(black_box(&features), &labels).unwrap()));

    let protocol = EpisodeProtocol {
        min_way: 5,
        max_way: 5,
        min_shot: 5,
        max_shot: 5,
        ..EpisodeProtocol::default()
    };
    let ep = sample_episode(&d, &protocol, 0).unwrap();
    let cfg = AdaptConfig {
        steps: 20,
        ..AdaptConfig::default()
    };
    c.bench_function("adapt_task/20", |b| b.iter(|| adapt_task(&model, black_box(&ep), &cfg).unwrap()));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
