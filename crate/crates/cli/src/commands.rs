use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ffsc_core::data::{gen_synthetic_domains, load_idx, sample_episode, stratified_split, DomainSpec};
use ffsc_core::eval::{
    emit_report, evaluate, paired_ttest, read_json, to_json, write_json, Backbones, ReportFormat, TTestResult,
};
use ffsc_core::flatness::{
    bound_report, flatness_report, landscape_slice, random_directions, BoundConfig, DivergenceMethod, FlatnessConfig,
    SliceConfig, TraceMode,
};
use ffsc_core::fusion::{finetune, FinetuneMode, FusionMode};
use ffsc_core::objective::ModelObjective;
use ffsc_core::optim::{head_accuracy, train};
use ffsc_core::select::select_backbone;
use ffsc_core::{
    Activation, BackboneBank, Batch, Domain, EvalConfig, EvalReport, Model, ObjectiveKind, Provenance, SyntheticSpec,
    TrainConfig,
};

use crate::args::*;
use crate::CliError;

type CliResult<T = ()> = Result<T, CliError>;

fn load_config<T: DeserializeOwned + Default>(common: &Common) -> CliResult<T> {
    match &common.config {
        Some(path) => Ok(read_json(path)?),
        None => Ok(T::default()),
    }
}

/// A domain JSON file, or an IDX pair given as `images,labels`.
fn load_domain(arg: &str) -> CliResult<Domain> {
    if let Some((images, labels)) = arg.split_once(',') {
        return Ok(load_idx(images, labels)?);
    }
    let domain: Domain = read_json(arg)?;
    domain.validate()?;
    Ok(domain)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult {
    match out {
        Some(path) => Ok(write_json(value, path)?),
        None => {
            print!("{}", to_json(value));
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Bank(a) => bank_cmd(a),
        Command::Select(a) => select_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Flatness(a) => flatness_cmd(a),
        Command::Landscape(a) => landscape_cmd(a),
        Command::Bound(a) => bound_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct GenDataConfig {
    seed: u64,
    #[serde(flatten)]
    spec: SyntheticSpec,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            spec: default_spec(4),
        }
    }
}

fn default_spec(domains: usize) -> SyntheticSpec {
    SyntheticSpec {
        dim: 16,
        sigma: 0.33,
        class_radius: 1.0,
        shift: 2.0,
        domains: (0..domains)
            .map(|j| DomainSpec {
                name: format!("domain-{j}"),
                classes: 8,
                samples_per_class: 60,
                mean_seed: None,
                label_noise: 0.0,
            })
            .collect(),
    }
}

fn gen_data(a: GenDataArgs) -> CliResult {
    let mut cfg: GenDataConfig = load_config(&a.common)?;
    if let Some(n) = a.domains {
        if a.common.config.is_some() {
            return Err(CliError::Usage("--domains only applies without --config".into()));
        }
        cfg.spec = default_spec(n);
    }
    if let Some(s) = a.shift {
        cfg.spec.shift = s;
    }
    if let Some(s) = a.sigma {
        cfg.spec.sigma = s;
    }
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    let domains = gen_synthetic_domains(&cfg.spec, cfg.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| ffsc_core::Error::io(&a.out, e))?;
    for d in &domains {
        let path = a.out.join(format!("{}.json", d.name));
        write_json(d, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct TrainCommandConfig {
    hidden: Vec<usize>,
    activation: Activation,
    #[serde(flatten)]
    train: TrainConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            train: TrainConfig::default(),
        }
    }
}

fn apply_overrides(cfg: &mut TrainConfig, o: &TrainOverrides, seed: Option<u64>) {
    if let Some(obj) = o.objective {
        cfg.objective = match obj {
            ObjectiveArg::Erm => ObjectiveKind::Erm,
            ObjectiveArg::Sam => ObjectiveKind::Sam,
        };
    }
    if let Some(r) = o.rho {
        cfg.rho = r;
    }
    if let Some(n) = o.iterations {
        cfg.total_iterations = n;
        cfg.restart_period = cfg.restart_period.min(n.max(1));
    }
    if let Some(lr) = o.lr {
        cfg.base_lr = lr;
    }
    if let Some(b) = o.batch_size {
        cfg.batch_size = b;
    }
    if let Some(w) = o.weight_decay {
        cfg.weight_decay = w;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    name: &'a str,
    source_dataset: &'a str,
    param_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<f64>,
    train_accuracy: f64,
    config_hash: String,
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let mut cfg: TrainCommandConfig = load_config(&a.common)?;
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    if let Some(act) = a.activation {
        cfg.activation = match act {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Identity => Activation::Identity,
        };
    }
    apply_overrides(&mut cfg.train, &a.overrides, a.common.seed);
    cfg.train.validate()?;
    let domain = load_domain(&a.data)?;
    let bank = BackboneBank::open(&a.bank)?;
    if bank.contains(&a.name) {
        return Err(ffsc_core::Error::DuplicateEntry(a.name).into());
    }
    let mut dims = vec![domain.dim()];
    dims.extend(&cfg.hidden);
    dims.push(domain.num_classes());
    let model = Model::new(&dims, cfg.activation, cfg.train.seed)?;
    let (model, history) = train(&model, &domain, &cfg.train)?;
    let provenance = Provenance::new(&cfg.train, &domain.name, None, FinetuneMode::None, 0);
    bank.put(&a.name, &model, &provenance)?;
    if let Some(path) = &a.history {
        #[derive(Serialize)]
        struct History<'a> {
            loss: &'a [f64],
            lr: &'a [f64],
            grad_norm: &'a [f64],
        }
        write_json(
            &History {
                loss: &history.loss,
                lr: &history.lr,
                grad_norm: &history.grad_norm,
            },
            path,
        )?;
    }
    let tail = history.loss.len().min(50);
    let final_loss =
        (tail > 0).then(|| history.loss[history.loss.len() - tail..].iter().sum::<f64>() / tail as f64);
    emit(
        &TrainSummary {
            name: &a.name,
            source_dataset: &domain.name,
            param_count: model.param_count(),
            final_loss,
            train_accuracy: head_accuracy(&model, &domain)?,
            config_hash: provenance.config_hash.clone(),
        },
        None,
    )
}

fn finetune_cmd(a: FinetuneArgs) -> CliResult {
    let mut cfg: TrainConfig = load_config(&a.common)?;
    apply_overrides(&mut cfg, &a.overrides, a.common.seed);
    cfg.validate()?;
    let bank = BackboneBank::open(&a.bank)?;
    if bank.contains(&a.name) {
        return Err(ffsc_core::Error::DuplicateEntry(a.name).into());
    }
    let (base, _) = bank.get(&a.base)?;
    let domain = load_domain(&a.data)?;
    let mode = match a.mode {
        FusionArg::Vanilla => FusionMode::Vanilla,
        FusionArg::Lora => FusionMode::Lora,
    };
    let rank = if mode == FusionMode::Lora { a.rank } else { 0 };
    let model = finetune(&base, &domain, &cfg, mode, rank)?;
    let provenance = Provenance::new(&cfg, &domain.name, Some(a.base.clone()), mode.into(), rank);
    bank.put(&a.name, &model, &provenance)?;
    emit(
        &TrainSummary {
            name: &a.name,
            source_dataset: &domain.name,
            param_count: model.param_count(),
            final_loss: None,
            train_accuracy: head_accuracy(&model, &domain)?,
            config_hash: provenance.config_hash.clone(),
        },
        None,
    )
}

fn bank_cmd(a: BankArgs) -> CliResult {
    match a.action {
        BankAction::List { bank, .. } => {
            for name in BackboneBank::open(&bank)?.list()? {
                println!("{name}");
            }
            Ok(())
        }
        BankAction::Inspect { bank, name, .. } => emit(&BackboneBank::open(&bank)?.inspect(&name)?, None),
    }
}

fn select_cmd(a: SelectArgs) -> CliResult {
    let mut protocol: ffsc_core::EpisodeProtocol = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        protocol.seed = s;
    }
    let domain = load_domain(&a.data)?;
    let bank = BackboneBank::open(&a.bank)?.load_all()?;
    let episode = sample_episode(&domain, &protocol, a.task)?;
    emit(&select_backbone(&bank, &episode.support)?, a.out.as_deref())
}

fn eval_cmd(a: EvalArgs) -> CliResult {
    let mut cfg: EvalConfig = load_config(&a.common)?;
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Seen => ffsc_core::eval::EvalMode::Seen,
            ModeArg::Unseen => ffsc_core::eval::EvalMode::Unseen,
        };
    }
    if let Some(t) = a.tasks {
        cfg.n_tasks = t;
    }
    if let Some(s) = a.adapt_steps {
        cfg.adapt.steps = s;
    }
    if let Some(s) = a.common.seed {
        cfg.protocol.seed = s;
        cfg.adapt.seed = s;
    }
    let domains = a.data.iter().map(|d| load_domain(d)).collect::<CliResult<Vec<_>>>()?;
    let bank = BackboneBank::open(&a.bank)?;
    let report = match &a.model {
        Some(name) => {
            let (model, _) = bank.get(name)?;
            let mut r = evaluate(Backbones::Single(&model), &domains, &cfg)?;
            r.backbones = vec![name.clone()];
            r
        }
        None => evaluate(Backbones::Bank(&bank.load_all()?), &domains, &cfg)?,
    };
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    match (&a.out, format) {
        (Some(path), f) => Ok(emit_report(&report, f, path)?),
        (None, ReportFormat::Json) => emit(&report, None),
        (None, ReportFormat::Csv) => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

/// Model from the bank and the held-out batch of `data` it is measured on.
fn held_out_batch(h: &HeldOut, seed: u64) -> CliResult<(Model, Batch)> {
    if !(h.holdout > 0.0 && h.holdout < 1.0) {
        return Err(CliError::Usage("--holdout must lie in (0, 1)".into()));
    }
    let (model, _) = BackboneBank::open(&h.bank)?.get(&h.model)?;
    let model = model.fold_adapters();
    let domain = load_domain(&h.data)?;
    let (_, held) = stratified_split(&domain, 1.0 - h.holdout, seed)?;
    if model.num_classes() != held.num_classes() {
        return Err(ffsc_core::Error::Shape(format!(
            "`{}` has {} outputs but `{}` has {} classes",
            h.model,
            model.num_classes(),
            held.name,
            held.num_classes()
        ))
        .into());
    }
    let batch = held.local_batch(&(0..held.len()).collect::<Vec<_>>());
    Ok((model, batch))
}

fn flatness_cmd(a: FlatnessArgs) -> CliResult {
    let mut cfg: FlatnessConfig = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if a.exact {
        cfg.trace = TraceMode::Exact;
    } else if let Some(p) = a.probes {
        cfg.trace = TraceMode::Auto(p);
    }
    if let Some(k) = a.top_k {
        cfg.top_k = k;
    }
    let (model, batch) = held_out_batch(&a.held_out, cfg.seed)?;
    emit(&flatness_report(&model, &batch, &cfg)?, a.out.as_deref())
}

fn landscape_cmd(a: LandscapeArgs) -> CliResult {
    let mut cfg: SliceConfig = load_config(&a.common)?;
    if let Some(h) = a.half_range {
        cfg.half_range = h;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(r) = a.rho {
        cfg.sam_rho = Some(r);
    }
    if !(1..=2).contains(&a.dims) {
        return Err(CliError::Usage("--dims must be 1 or 2".into()));
    }
    let seed = a.common.seed.unwrap_or(0);
    let (model, batch) = held_out_batch(&a.held_out, seed)?;
    let params = model.param_vector();
    let directions = random_directions(params.len(), a.dims, seed)?;
    let obj = ModelObjective::new(&model, &batch);
    let grid = landscape_slice(&obj, &params, &directions, &cfg)?;
    let csv = grid.to_csv();
    match &a.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| ffsc_core::Error::io(path, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn bound_cmd(a: BoundArgs) -> CliResult {
    let mut cfg: BoundConfig = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
        cfg.protocol.seed = s;
    }
    if let Some(d) = a.divergence {
        cfg.divergence = match d {
            DivergenceArg::AnalyticGaussian => DivergenceMethod::AnalyticGaussian,
            DivergenceArg::MonteCarlo => DivergenceMethod::MonteCarlo,
        };
    }
    if let Some(t) = a.tasks {
        cfg.n_tasks = t;
    }
    let (model, provenance) = BackboneBank::open(&a.bank)?.get(&a.model)?;
    if provenance.objective != ObjectiveKind::Sam {
        return Err(CliError::Usage(format!("`{}` was not trained with SAM", a.model)));
    }
    cfg.train = provenance
        .train_config
        .ok_or_else(|| CliError::Usage(format!("`{}` has no recorded training configuration", a.model)))?;
    let source = load_domain(&a.source)?;
    let targets = a.targets.iter().map(|t| load_domain(t)).collect::<CliResult<Vec<_>>>()?;
    emit(&bound_report(&model, &source, &targets, &cfg)?, a.out.as_deref())
}

#[derive(Serialize)]
struct DomainComparison {
    domain: String,
    mean_a: f64,
    mean_b: f64,
    ttest: TTestResult,
}

#[derive(Serialize)]
struct Comparison {
    domains: Vec<DomainComparison>,
    /// All tasks of all domains, paired in order.
    pooled: TTestResult,
}

fn compare_cmd(a: CompareArgs) -> CliResult {
    let ra: EvalReport = read_json(&a.a)?;
    let rb: EvalReport = read_json(&a.b)?;
    if ra.domains.len() != rb.domains.len() {
        return Err(CliError::Usage("reports cover different numbers of domains".into()));
    }
    let mut domains = Vec::new();
    let (mut all_a, mut all_b) = (Vec::new(), Vec::new());
    for (da, db) in ra.domains.iter().zip(&rb.domains) {
        if da.domain != db.domain || da.accuracies.len() != db.accuracies.len() {
            return Err(CliError::Usage(format!(
                "domain `{}` does not pair with `{}`",
                da.domain, db.domain
            )));
        }
        domains.push(DomainComparison {
            domain: da.domain.clone(),
            mean_a: da.mean,
            mean_b: db.mean,
            ttest: paired_ttest(&da.accuracies, &db.accuracies)?,
        });
        all_a.extend(&da.accuracies);
        all_b.extend(&db.accuracies);
    }
    let pooled = paired_ttest(&all_a, &all_b)?;
    emit(&Comparison { domains, pooled }, a.out.as_deref())
}
