//! k-shot, base-to-new and domain-shift evaluation, timing, and reports.

mod bench;
mod eval;
mod metrics;
mod report;
mod task;

pub use bench::{bench_iteration, BenchRecord};
pub use eval::{
    base_to_new_with, baseline_base_to_new, eval_base_to_new, eval_domain_shift, evaluate,
    evaluate_baseline, evaluate_selector, selector_inference, BaseToNew, DomainTarget, EvalReport,
    SELECTOR_METHOD,
};
pub use metrics::{accuracy, harmonic_mean};
pub use report::{emit_report, mean_over_seeds, parse_reports_json, ReportFormat, CSV_COLUMNS};
pub use task::{sample_k_shot, BaseNewSplit, FewShotTask, SHOT_COUNTS};
