//! Episodic evaluation, summary statistics and report files.

mod evaluate;
mod stats;

pub use evaluate::{
    emit_report, evaluate, read_json, to_json, with_thread_pool, write_json, Backbones, DomainResult, EvalConfig,
    EvalMode, EvalReport, ReportFormat, TaskResult, THREADS_ENV,
};
pub use stats::{ci95, ln_gamma, paired_ttest, regularized_beta, student_t_two_sided, TTestResult, ALPHA, Z95};
