use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::ci95;
use crate::data::{sample_episode, Domain, EpisodeProtocol};
use crate::error::{Error, Result};
use crate::flatness::fmt_g;
use crate::fusion::NamedBackbone;
use crate::nn::Model;
use crate::rng;
use crate::select::{accuracy, adapt_task, select_backbone, AdaptConfig};

/// Environment variable capping worker threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "FFSC_THREADS";

/// Runs `f` on a pool sized by `FFSC_THREADS`.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a number, got `{v}`")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Clone, Copy, Debug)]
pub enum Backbones<'a> {
    Single(&'a Model),
    Bank(&'a [NamedBackbone]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Use the bank entry whose source dataset is the evaluated domain.
    Seen,
    /// Pick a bank entry per task from its support set.
    Unseen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_tasks: usize,
    pub protocol: EpisodeProtocol,
    pub mode: EvalMode,
    #[serde(default)]
    pub adapt: AdaptConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_tasks: 100,
            protocol: EpisodeProtocol::default(),
            mode: EvalMode::Unseen,
            adapt: AdaptConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_index: usize,
    pub way: usize,
    pub support_size: usize,
    pub query_size: usize,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    /// Every bank entry scored as degenerate on this support set, so the
    /// first entry by name was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub selection_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    pub domain: String,
    pub n_tasks: usize,
    pub mean: f64,
    /// Half-width; absent for a single task.
    pub ci95: Option<f64>,
    pub accuracies: Vec<f64>,
    /// How often each backbone was used.
    pub backbone_counts: BTreeMap<String, usize>,
    pub tasks: Vec<TaskResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub backbones: Vec<String>,
    pub domains: Vec<DomainResult>,
}

/// Episodic accuracy per domain. Task `t` of domain `d` depends only on
/// `(protocol.seed, d, t)`, so results do not depend on scheduling.
pub fn evaluate(backbones: Backbones<'_>, domains: &[Domain], cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.n_tasks == 0 {
        return Err(Error::InvalidConfig("n_tasks must be at least 1".into()));
    }
    cfg.protocol.validate()?;
    let names = match backbones {
        Backbones::Single(_) => vec!["model".to_string()],
        Backbones::Bank(bank) => {
            if bank.is_empty() {
                return Err(Error::InvalidConfig("backbone bank is empty".into()));
            }
            let mut names: Vec<String> = bank.iter().map(|b| b.name.clone()).collect();
            names.sort();
            names
        }
    };
    let mut results = Vec::with_capacity(domains.len());
    for (d, domain) in domains.iter().enumerate() {
        let seen: Option<&Model> = match (backbones, cfg.mode) {
            (Backbones::Bank(bank), EvalMode::Seen) => {
                let mut matches: Vec<&NamedBackbone> = bank
                    .iter()
                    .filter(|b| b.provenance.source_dataset == domain.name)
                    .collect();
                matches.sort_by(|a, b| a.name.cmp(&b.name));
                Some(
                    &matches
                        .first()
                        .ok_or_else(|| {
                            Error::InvalidConfig(format!("no bank entry was trained on `{}`", domain.name))
                        })?
                        .model,
                )
            }
            _ => None,
        };
        let protocol = cfg.protocol.with_seed(rng::mix(cfg.protocol.seed, d as u64));
        let tasks = with_thread_pool(|| {
            (0..cfg.n_tasks)
                .into_par_iter()
                .map(|t| {
                    run_task(backbones, seen, domain, &protocol, &cfg.adapt, t).map_err(|e| Error::Task {
                        index: t,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<TaskResult>>>()
        })??;
        let accuracies: Vec<f64> = tasks.iter().map(|t| t.accuracy).collect();
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        let ci = if accuracies.len() >= 2 {
            Some(ci95(&accuracies)?.1)
        } else {
            None
        };
        let mut backbone_counts = BTreeMap::new();
        for t in &tasks {
            if let Some(b) = &t.backbone {
                *backbone_counts.entry(b.clone()).or_insert(0) += 1;
            }
        }
        results.push(DomainResult {
            domain: domain.name.clone(),
            n_tasks: cfg.n_tasks,
            mean,
            ci95: ci,
            accuracies,
            backbone_counts,
            tasks,
        });
    }
    Ok(EvalReport {
        config: cfg.clone(),
        backbones: names,
        domains: results,
    })
}

fn run_task(
    backbones: Backbones<'_>,
    seen: Option<&Model>,
    domain: &Domain,
    protocol: &EpisodeProtocol,
    adapt: &AdaptConfig,
    t: usize,
) -> Result<TaskResult> {
    let ep = sample_episode(domain, protocol, t as u64)?;
    let mut selection_fallback = false;
    let (model, name) = match (backbones, seen) {
        (Backbones::Single(m), _) => (m, None),
        (Backbones::Bank(bank), Some(m)) => {
            let name = bank.iter().find(|b| std::ptr::eq(&b.model, m)).map(|b| b.name.clone());
            (m, name)
        }
        (Backbones::Bank(bank), None) => {
            let chosen = match select_backbone(bank, &ep.support) {
                Ok(report) => report.chosen,
                Err(Error::SelectionFailed(_)) => {
                    selection_fallback = true;
                    bank.iter().map(|b| b.name.clone()).min().expect("bank is non-empty")
                }
                Err(e) => return Err(e),
            };
            let entry = bank.iter().find(|b| b.name == chosen).expect("chosen entry is in the bank");
            (&entry.model, Some(chosen))
        }
    };
    let adapted = adapt_task(model, &ep, adapt)?;
    Ok(TaskResult {
        task_index: t,
        way: ep.way,
        support_size: ep.support.len(),
        query_size: ep.query.len(),
        accuracy: accuracy(&adapted.predictions, &ep.query.labels),
        backbone: name,
        selection_fallback,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl EvalReport {
    /// `domain,n_tasks,mean,ci95` with six significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("domain,n_tasks,mean,ci95\n");
        for d in &self.domains {
            let ci = d.ci95.map(fmt_g).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", csv_field(&d.domain), d.n_tasks, fmt_g(d.mean), ci));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pretty JSON with a trailing newline; struct fields keep declaration order.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => write_json(report, path),
        ReportFormat::Csv => std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e)),
    }
}
