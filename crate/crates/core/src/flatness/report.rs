use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::divergence::{tv_divergence, DivergenceEstimate, DivergenceMethod};
use super::hessian::{default_hvp_step, hessian_trace, top_eigenvalues, TraceMode};
use crate::data::{sample_episode, Domain, Episode, EpisodeProtocol};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, Batch, Model};
use crate::objective::ModelObjective;
use crate::optim::{erm_objective, sam_gradient, train, ObjectiveKind, TrainConfig};
use crate::rng;
use crate::select::{centroids, extract_features, squared_distances};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlatnessConfig {
    pub trace: TraceMode,
    pub top_k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Defaults to `1e-4·(1 + ‖θ‖)`.
    #[serde(default)]
    pub hvp_step: Option<f64>,
}

impl Default for FlatnessConfig {
    fn default() -> Self {
        Self {
            trace: TraceMode::Auto(100),
            top_k: 2,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            hvp_step: None,
        }
    }
}

/// Identifies the batch the curvature was measured on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchId {
    pub size: usize,
    /// SHA-256 over the inputs (f64 LE) followed by the labels (u64 LE).
    pub sha256: String,
}

impl BatchId {
    pub fn of(batch: &Batch) -> Self {
        let mut h = Sha256::new();
        for x in batch.inputs.data() {
            h.update(x.to_le_bytes());
        }
        for &y in &batch.labels {
            h.update((y as u64).to_le_bytes());
        }
        Self {
            size: batch.len(),
            sha256: hex::encode(h.finalize()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub trace: f64,
    pub trace_stderr: f64,
    pub trace_exact: bool,
    pub probes: usize,
    /// Decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    pub eigen_converged: Vec<bool>,
    pub eigen_iterations: Vec<usize>,
    pub hvp_step: f64,
    pub param_count: usize,
    pub batch: BatchId,
}

/// Hessian trace and top eigenvalues of the data loss (no weight decay).
pub fn flatness_report(model: &Model, batch: &Batch, cfg: &FlatnessConfig) -> Result<FlatnessReport> {
    let params = model.param_vector();
    let h = cfg.hvp_step.unwrap_or_else(|| default_hvp_step(&params));
    let obj = ModelObjective::new(model, batch);
    let trace = hessian_trace(&obj, &params, cfg.trace, cfg.seed, h)?;
    let eig = top_eigenvalues(&obj, &params, cfg.top_k, cfg.max_iters, cfg.tol, rng::mix(cfg.seed, 0xe1), h)?;
    Ok(FlatnessReport {
        trace: trace.estimate,
        trace_stderr: trace.stderr,
        trace_exact: trace.exact,
        probes: trace.probes,
        eigenvalues: eig.values,
        eigen_converged: eig.converged,
        eigen_iterations: eig.iterations,
        hvp_step: h,
        param_count: params.len(),
        batch: BatchId::of(batch),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    /// Settings `θ*` was trained with; ρ and α are read from here and the
    /// reference runs reuse its budget.
    pub train: TrainConfig,
    pub divergence: DivergenceMethod,
    pub divergence_samples: usize,
    pub protocol: EpisodeProtocol,
    pub n_tasks: usize,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            divergence: DivergenceMethod::AnalyticGaussian,
            divergence_samples: 20_000,
            protocol: EpisodeProtocol::default(),
            n_tasks: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDivergence {
    pub domain: String,
    #[serde(flatten)]
    pub estimate: DivergenceEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// First-order SAM objective at `θ*` on the source data.
    pub sam_loss: f64,
    /// Regularized ERM loss of an independent ERM run with the same budget.
    pub erm_min: f64,
    pub sam_erm_gap: f64,
    pub divergences: Vec<TargetDivergence>,
    pub expected_divergence: f64,
    /// Mean episodic query loss of `θ*` on the targets.
    pub target_risk: f64,
    /// Same quantity for a model trained on the pooled target data.
    pub target_risk_reference: f64,
    pub target_gap: f64,
    /// Capacity and confidence terms that have no numeric estimate here.
    pub not_computed: Vec<String>,
    pub notes: Vec<String>,
}

/// Prototype cross-entropy of the query set, centroids from the support set.
pub fn episodic_query_loss(model: &Model, episode: &Episode) -> Result<f64> {
    let plain = model.fold_adapters();
    let s = extract_features(&plain, &episode.support.inputs)?;
    let q = extract_features(&plain, &episode.query.inputs)?;
    let c = centroids(&s, &episode.support.labels)?;
    let y = episode
        .query
        .labels
        .iter()
        .map(|l| {
            c.classes
                .binary_search(l)
                .map_err(|_| Error::Contract("query class missing from support".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut logits = squared_distances(&q, &c);
    logits.scale(-1.0);
    let (loss, _) = softmax_cross_entropy(&logits, &y);
    if !loss.is_finite() {
        return Err(Error::non_finite("episodic query loss"));
    }
    Ok(loss)
}

fn mean_query_loss(model: &Model, targets: &[Domain], cfg: &BoundConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (d, target) in targets.iter().enumerate() {
        let protocol = cfg.protocol.with_seed(rng::mix(cfg.protocol.seed, d as u64));
        for t in 0..cfg.n_tasks {
            let ep = sample_episode(target, &protocol, t as u64).map_err(|e| Error::Task {
                index: t,
                source: Box::new(e),
            })?;
            total += episodic_query_loss(model, &ep)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn full_local(domain: &Domain) -> Batch {
    domain.local_batch(&(0..domain.len()).collect::<Vec<_>>())
}

/// Computable terms of the source-to-target generalization gap.
pub fn bound_report(source_model: &Model, source: &Domain, targets: &[Domain], cfg: &BoundConfig) -> Result<BoundReport> {
    if targets.is_empty() {
        return Err(Error::InsufficientData("bound report needs at least one target domain".into()));
    }
    if cfg.n_tasks == 0 {
        return Err(Error::InvalidConfig("n_tasks must be at least 1".into()));
    }
    cfg.train.validate()?;
    let model = source_model.fold_adapters();
    let batch = full_local(source);
    let (sam_loss, _) = sam_gradient(&model, &batch, cfg.train.rho, cfg.train.weight_decay)?;

    let erm_cfg = TrainConfig {
        objective: ObjectiveKind::Erm,
        seed: rng::mix(cfg.seed, 0xe7),
        ..cfg.train.clone()
    };
    let fresh = Model::new(&model.layer_dims(), model.activation(), rng::mix(cfg.seed, 0xe8))?;
    let (erm_model, _) = train(&fresh, source, &erm_cfg)?;
    let (erm_min, _) = erm_objective(&erm_model, &batch, cfg.train.weight_decay)?;

    let divergences = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            tv_divergence(source, t, cfg.divergence, cfg.divergence_samples, rng::mix(cfg.seed, i as u64))
                .map(|estimate| TargetDivergence {
                    domain: t.name.clone(),
                    estimate,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let expected_divergence = divergences.iter().map(|d| d.estimate.div).sum::<f64>() / divergences.len() as f64;

    let target_risk = mean_query_loss(&model, targets, cfg)?;
    let pooled = Domain::pooled("pooled-targets", targets)?;
    let mut dims = model.layer_dims();
    *dims.last_mut().expect("layers") = pooled.num_classes();
    let reference = Model::new(&dims, model.activation(), rng::mix(cfg.seed, 0xe9))?;
    let (reference, _) = train(&reference, &pooled, &erm_cfg)?;
    let target_risk_reference = mean_query_loss(&reference, targets, cfg)?;

    let report = BoundReport {
        sam_loss,
        erm_min,
        sam_erm_gap: sam_loss - erm_min,
        divergences,
        expected_divergence,
        target_risk,
        target_risk_reference,
        target_gap: target_risk - target_risk_reference,
        not_computed: [
            "vc_dimension",
            "component_vc_dimensions",
            "cover_size",
            "confidence",
            "parameter_space_diameter",
        ]
        .map(String::from)
        .to_vec(),
        notes: vec![
            "erm_min is the loss reached by one ERM run with the same budget, an upper estimate of the minimum".into(),
            "target_risk_reference comes from a model trained on the pooled targets, including their query samples".into(),
        ],
    };
    let finite = [
        report.sam_loss,
        report.erm_min,
        report.expected_divergence,
        report.target_risk,
        report.target_risk_reference,
    ];
    if finite.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite("bound report"));
    }
    Ok(report)
}
