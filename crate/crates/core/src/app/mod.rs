//! Configuration and the end-to-end experiment runner.

pub mod config;
pub mod experiment;

pub use config::{parse_config, parse_config_text, parse_flag_overrides, RunConfig};
pub use experiment::{
    align_labels, export_subspace, ingest, model_grid, run_experiment, select_nlse, train_words, write_homophily,
    ExperimentReport, SummaryRow, SUMMARY_FILE,
};
