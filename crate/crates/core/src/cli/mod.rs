//! Experiment configuration, execution and output files.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ConfigError, ExperimentConfig, ModelSelector, RunMode};
pub use experiment::{run_experiment, ExperimentError, ExperimentReport, RunOptions};
pub use output::{read_trace_csv, FigureKind, SummaryRow, TraceTable};
