use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{cmd_correlate, cmd_report, cmd_score, cmd_sweep};
use crate::config::{split_list, ListValue, Settings, URL_ENV};
use crate::error::{CliError, Outcome};

#[derive(Debug, Parser)]
#[command(name = "blanc-eval", version, about = "Summary metric scoring and correlation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub flags: Flags,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Compute metric scores for every record.
    Score,
    /// Correlate a score table with human judgements.
    Correlate,
    /// Score and rank the full BLANC parameter grid.
    Sweep,
    /// Render a markdown summary of earlier outputs.
    Report,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Flat TOML file with the same keys as the long flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    /// Score table for `correlate` [default: <out>/scores.csv].
    #[arg(long, global = true)]
    pub scores: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `mock` or `remote` [default: mock].
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Inference service base URL; falls back to EVAL_BACKEND_URL.
    #[arg(long, global = true)]
    pub url: Option<String>,
    /// Comma-separated model ids.
    #[arg(long, global = true)]
    pub models: Option<String>,
    /// Comma-separated metric or configuration names.
    #[arg(long, global = true)]
    pub metrics: Option<String>,
    /// Also score every sweep configuration in `score`.
    #[arg(long, global = true)]
    pub sweep: bool,
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Significance level [default: 0.05].
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Worker threads [default: one per CPU].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Configurations per factor in the sweep ranking [default: 5].
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Compare BLANC predictions case-insensitively for uncased models.
    #[arg(long, global = true)]
    pub fold_case: bool,
}

impl Flags {
    fn settings(&self) -> Settings {
        Settings {
            corpus: self.corpus.clone(),
            annotations: self.annotations.clone(),
            scores: self.scores.clone(),
            out: self.out.clone(),
            backend: self.backend.clone(),
            url: self.url.clone(),
            models: self.models.as_deref().map(|s| ListValue::Items(split_list(s))),
            metrics: self.metrics.as_deref().map(|s| ListValue::Items(split_list(s))),
            sweep: self.sweep.then_some(true),
            cache: self.cache.clone(),
            alpha: self.alpha,
            workers: self.workers,
            top_k: self.top_k,
            fold_case: self.fold_case.then_some(true),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let file = match &cli.flags.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let env_url = std::env::var(URL_ENV).ok().filter(|u| !u.is_empty());
    let config = cli.flags.settings().over(file).resolve(env_url)?;
    log::debug!("{config:?}");
    match cli.command {
        Command::Score => cmd_score(&config),
        Command::Correlate => cmd_correlate(&config),
        Command::Sweep => cmd_sweep(&config),
        Command::Report => cmd_report(&config),
    }
}
