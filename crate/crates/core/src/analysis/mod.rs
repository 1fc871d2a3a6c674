//! Experiment drivers: kNN cross-validation, accuracy-vs-error sweeps,
//! factor score ratio reports and the config-driven runner behind the CLI.

pub mod experiment;
pub mod knn;
pub mod report;
pub mod sweep;

pub use experiment::{load_labels, run_and_record, run_experiment, Command, ErrorRecord, ExperimentConfig};
pub use knn::{assign_folds, knn_cv, knn_cv_with, predict, FoldMode, KnnResult};
pub use report::{fsr_distribution_report, fsr_rows, FsrRow, FSR_HEADER};
pub use sweep::{
    accuracy_vs_error_sweep, average_ranks, spearman, sweep_representation, sweep_trend, SweepOptions, SweepRow,
    Trend, SWEEP_HEADER,
};
