use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ffsc", version, about = "Flatness-aware few-shot backbone training, fusion, selection and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options accepted by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON file with the subcommand's configuration; flags override it.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the subcommand makes.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic Gaussian-mixture domains as JSON files.
    GenData(GenDataArgs),
    /// Train a backbone on one domain and store it in a bank.
    Train(TrainArgs),
    /// Fine-tune a bank entry on another domain and store the result.
    Finetune(FinetuneArgs),
    /// List or inspect bank entries.
    Bank(BankArgs),
    /// Score every bank entry on one episode's support set.
    Select(SelectArgs),
    /// Episodic evaluation with 95% confidence intervals.
    Eval(EvalArgs),
    /// Hessian trace and top eigenvalues on a held-out batch.
    Flatness(FlatnessArgs),
    /// Loss values on a 1-D or 2-D slice through parameter space, as CSV.
    Landscape(LandscapeArgs),
    /// Computable terms of the source-to-target transfer bound.
    Bound(BoundArgs),
    /// Paired t-test between two evaluation reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory; one `<domain>.json` per domain.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of domains when no config is given.
    #[arg(long)]
    pub domains: Option<usize>,
    /// Inter-domain shift δ.
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ObjectiveArg {
    Erm,
    Sam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
    Identity,
}

/// Flags that override fields of the training configuration.
#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training domain: a domain JSON file or `images.idx,labels.idx`.
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub bank: PathBuf,
    /// Bank entry name for the trained backbone.
    #[arg(long)]
    pub name: String,
    /// Hidden layer widths, e.g. `64,64`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<ActivationArg>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Also write the per-iteration loss, learning rate and gradient norm.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionArg {
    Vanilla,
    Lora,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub bank: PathBuf,
    /// Bank entry to start from.
    #[arg(long)]
    pub base: String,
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub name: String,
    #[arg(long, value_enum, default_value = "vanilla")]
    pub mode: FusionArg,
    /// LoRA rank.
    #[arg(long, default_value_t = 4)]
    pub rank: usize,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct BankArgs {
    #[command(subcommand)]
    pub action: BankAction,
}

#[derive(Debug, Subcommand)]
pub enum BankAction {
    /// Entry names, one per line.
    List {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bank: PathBuf,
    },
    /// Architecture and provenance of one entry, as JSON.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bank: PathBuf,
        name: String,
    },
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub data: String,
    /// Episode index within the protocol's task stream.
    #[arg(long, default_value_t = 0)]
    pub task: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Seen,
    Unseen,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub bank: PathBuf,
    /// Evaluate this single entry instead of selecting from the bank.
    #[arg(long)]
    pub model: Option<String>,
    /// Domains to evaluate on.
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<String>,
    #[arg(long)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Adapter training steps per task; 0 classifies with plain nearest centroid.
    #[arg(long)]
    pub adapt_steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

/// The batch is a stratified held-out fraction of `--data`.
#[derive(Debug, Args)]
pub struct HeldOut {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: String,
    /// Fraction of the domain held out for the measurement batch.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct FlatnessArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub held_out: HeldOut,
    /// Rademacher probes (exact enumeration is used for small models).
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub held_out: HeldOut,
    /// Number of random directions, 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub dims: usize,
    #[arg(long)]
    pub half_range: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DivergenceArg {
    AnalyticGaussian,
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub bank: PathBuf,
    /// SAM-trained source backbone.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub source: String,
    #[arg(long, num_args = 1.., required = true)]
    pub targets: Vec<String>,
    #[arg(long)]
    pub divergence: Option<DivergenceArg>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Evaluation report JSON (first sample, `a` in `a − b`).
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
