//! Metrics, evaluation protocols, ablations and reports.

mod ablation;
mod metrics;
mod protocol;
mod report;

pub use ablation::{run_ablation, AblationRow, AblationTable, Variant, VARIANTS};
pub use metrics::{mae, nasa_score, r2, rmse, MetricsReport};
pub use protocol::{
    draw_support, evaluate_cmapss_last_point, evaluate_few_shot, mean_baseline, predict_windows, support_query,
    FewShotEval, LastPointEval, UnitEval,
};
pub use report::{emit_report, parse_report, read_report, render_report, ReportFormat};
