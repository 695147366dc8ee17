//! Experiment configuration, the representation × architecture grid runner
//! and result reporting.

mod config;
mod features;
mod report;
mod runner;

pub use config::{experiment_seed, ExperimentConfig, Representation};
pub use features::load_features;
pub use report::{emit_report, mean_delta, mean_relative_delta, read_results, render_markdown, write_results, ExperimentResult, CSV_HEADER};
pub use runner::{prepare, run_experiment, run_grid, GridOutcome, Prepared};
