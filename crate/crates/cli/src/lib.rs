//! Command-line driver: score a corpus, sweep BLANC configurations and
//! correlate everything with human judgements.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_correlate, cmd_correlate_with, cmd_report, cmd_score, cmd_score_with, cmd_sweep,
    cmd_sweep_with, make_backend,
};
pub use config::{BackendChoice, RunConfig, Settings};
pub use error::{CliError, Outcome, FATAL_EXIT_CODE};
