//! Metrics, cross-validation, grid search and report emission.

pub mod cv;
pub mod grid;
pub mod metrics;
pub mod report;

pub use cv::{cross_validate, kfold_split, CvPlan, CvResult, Fold, FoldScores, Prediction, ScalingMode};
pub use grid::{grid_search, CandidateScore, GridResult, GridSpec};
pub use metrics::{accuracy_pct, mae, mape, r2, rmse, MetricSet, METRIC_LABELS};
pub use report::{emit_report, evaluate, EvaluationReport, MetricSpace, ReportEntry};
