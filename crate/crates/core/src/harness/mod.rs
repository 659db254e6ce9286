//! Experiment orchestration: noise calibration, tuning, the method
//! registry, metrics and table/plot output.

mod config;
mod experiment;
mod methods;
mod metrics;
pub mod report;
mod tables;
mod tuning;

pub use config::{Budget, ClusterSource, ExperimentConfig, Method, Problem, TuningGrids};
pub use experiment::{run_experiment, write_artifacts, Experiment};
pub use metrics::{
    mean_and_stderr, mean_relative_mse, noise_sigma, relative_mse, relative_mse_rows, MethodReport,
    MethodStatus, MetricsReport, Timings, SCHEMA_VERSION,
};
pub use tables::{
    reproduce_table, table_config, TableCell, TableReport, TableRow, RANDOM_REPEATS, REFERENCE_BAND,
};
pub use tuning::{tune_discrete, tune_lambda, Tuned};
