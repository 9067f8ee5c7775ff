//! Within-project experiments: repeated training runs per project and
//! model, aggregated into report tables and k-sweep curves.

mod config;
mod emit;
mod run;

pub use config::{project_name, ExperimentConfig, FeatureSource, ModelKind, ProjectSource, TrainOverrides};
pub use emit::{
    emit_curve, emit_report, published_for, render_curve, render_delimited, render_markdown, render_report,
    ReportFormat,
};
pub use run::{
    check_hygiene, curve_from_report, prepare_project, run_experiment, sweep_k, training_set, AverageRow,
    CurvePoint, ExperimentReport, MetricSummary, PreparedProject, ProjectError, RepeatOutcome,
    ReplicationCheck, ReportRow, TrainingSet, VALIDATION_PAIR_TAG,
};
