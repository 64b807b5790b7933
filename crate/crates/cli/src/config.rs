//! Run configuration: command-line flags layered over an optional flat TOML
//! file, with `EVAL_BACKEND_URL` as the last resort for the service URL.

use std::path::{Path, PathBuf};

use blanc_core::backend::GERMAN_MODELS;
use blanc_core::scoring::{LexicalMetric, MetricSpec};
use blanc_core::BlancConfig;
use serde::Deserialize;

use crate::error::CliError;

pub const URL_ENV: &str = "EVAL_BACKEND_URL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Mock,
    Remote { url: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub annotations_path: Option<PathBuf>,
    /// Score table read by `correlate`; defaults to `<output_dir>/scores.csv`.
    pub scores_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub backend: BackendChoice,
    pub models: Vec<String>,
    pub metrics: Vec<MetricSpec>,
    /// `score` also computes every sweep configuration for `models`.
    pub sweep: bool,
    pub cache_path: Option<PathBuf>,
    pub significance_level: f64,
    /// Worker threads; `None` uses one per CPU.
    pub workers: Option<usize>,
    pub top_k: usize,
    pub fold_case_uncased: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus_path: None,
            annotations_path: None,
            scores_path: None,
            output_dir: PathBuf::from("out"),
            backend: BackendChoice::Mock,
            models: GERMAN_MODELS.iter().map(|m| m.to_string()).collect(),
            metrics: default_metrics(),
            sweep: false,
            cache_path: None,
            significance_level: 0.05,
            workers: None,
            top_k: 5,
            fold_case_uncased: false,
        }
    }
}

/// Every baseline plus the recommended BLANC configuration.
pub fn default_metrics() -> Vec<MetricSpec> {
    LexicalMetric::ALL
        .into_iter()
        .map(MetricSpec::Lexical)
        .chain([MetricSpec::Blanc(BlancConfig::default())])
        .collect()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let alpha = self.significance_level;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Config(format!(
                "significance level must lie in (0, 1), got {alpha}"
            )));
        }
        if let BackendChoice::Remote { url } = &self.backend {
            if url.trim().is_empty() {
                return Err(CliError::Config("remote backend needs a URL".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(CliError::Config("top-k must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(CliError::Config("no models given".into()));
        }
        Ok(())
    }

    pub fn scores_file(&self) -> PathBuf {
        self.scores_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("scores.csv"))
    }
}

/// A list given either as `"a,b"` or as `["a", "b"]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    Joined(String),
    Items(Vec<String>),
}

impl ListValue {
    pub fn items(&self) -> Vec<String> {
        match self {
            ListValue::Joined(s) => split_list(s),
            ListValue::Items(v) => v.iter().map(|s| s.trim().to_string()).collect(),
        }
    }
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Settings that may appear in the configuration file or on the command
/// line. Every field is optional; unset fields fall through to defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub corpus: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub backend: Option<String>,
    pub url: Option<String>,
    pub models: Option<ListValue>,
    pub metrics: Option<ListValue>,
    pub sweep: Option<bool>,
    pub cache: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub workers: Option<usize>,
    pub top_k: Option<usize>,
    pub fold_case: Option<bool>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::input(path, e))
    }

    /// Field-wise `self` over `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        Settings {
            corpus: self.corpus.or(lower.corpus),
            annotations: self.annotations.or(lower.annotations),
            scores: self.scores.or(lower.scores),
            out: self.out.or(lower.out),
            backend: self.backend.or(lower.backend),
            url: self.url.or(lower.url),
            models: self.models.or(lower.models),
            metrics: self.metrics.or(lower.metrics),
            sweep: self.sweep.or(lower.sweep),
            cache: self.cache.or(lower.cache),
            alpha: self.alpha.or(lower.alpha),
            workers: self.workers.or(lower.workers),
            top_k: self.top_k.or(lower.top_k),
            fold_case: self.fold_case.or(lower.fold_case),
        }
    }

    /// Resolves against defaults. `env_url` is consulted only when neither
    /// layer names a URL.
    pub fn resolve(self, env_url: Option<String>) -> Result<RunConfig, CliError> {
        let d = RunConfig::default();
        let backend = match self.backend.as_deref().unwrap_or("mock") {
            "mock" => BackendChoice::Mock,
            "remote" => {
                let url = self.url.or(env_url).ok_or_else(|| {
                    CliError::Config(format!("remote backend needs --url or {URL_ENV}"))
                })?;
                BackendChoice::Remote { url }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown backend `{other}` (expected mock or remote)"
                )))
            }
        };
        let metrics = match self.metrics {
            None => d.metrics,
            Some(list) => list
                .items()
                .iter()
                .map(|m| m.parse::<MetricSpec>().map_err(CliError::Config))
                .collect::<Result<_, _>>()?,
        };
        let config = RunConfig {
            corpus_path: self.corpus,
            annotations_path: self.annotations,
            scores_path: self.scores,
            output_dir: self.out.unwrap_or(d.output_dir),
            backend,
            models: self.models.map_or(d.models, |l| l.items()),
            metrics,
            sweep: self.sweep.unwrap_or(d.sweep),
            cache_path: self.cache,
            significance_level: self.alpha.unwrap_or(d.significance_level),
            workers: self.workers.or(d.workers),
            top_k: self.top_k.unwrap_or(d.top_k),
            fold_case_uncased: self.fold_case.unwrap_or(d.fold_case_uncased),
        };
        config.validate()?;
        Ok(config)
    }
}
