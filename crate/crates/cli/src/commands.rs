//! The four subcommands. Each `cmd_*_with` variant takes the backend as a
//! parameter so callers can inject a scripted or counting model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use blanc_core::backend::{MaskedLm, MockBackend, RemoteBackend};
use blanc_core::blanc::{sweep_grid, BlancOptions};
use blanc_core::cache::write_atomic;
use blanc_core::corpus::{aggregate_mos, load_annotations, load_corpus, CorpusRecord};
use blanc_core::matrix::format_score;
use blanc_core::scoring::{run_sweep, score_corpus, ScoringOptions, NO_REFERENCES};
use blanc_core::stats::{
    anderson_darling_normal, correlation_report_with_alpha, rank_configs, read_report_csv,
    split_by_mean, write_bar_csv, write_report_csv, CorrelationEntry, CorrelationReport,
    SplitCriterion,
};
use blanc_core::{Factor, MetricSpec, MosTable, RaterKind, ScoreCache, ScoreMatrix};

use crate::config::{BackendChoice, RunConfig};
use crate::error::{CliError, Outcome};

pub const SCORES_FILE: &str = "scores.csv";
pub const MISSING_FILE: &str = "missing.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SKIPPED_FILE: &str = "skipped.csv";
pub const NORMALITY_FILE: &str = "normality.csv";
pub const SPLITS_FILE: &str = "splits.csv";
pub const SWEEP_SCORES_FILE: &str = "sweep_scores.csv";
pub const SWEEP_MISSING_FILE: &str = "sweep_missing.csv";
pub const SWEEP_REPORT_FILE: &str = "sweep_report.csv";
pub const SWEEP_SKIPPED_FILE: &str = "sweep_skipped.csv";
pub const RANKING_FILE: &str = "ranking.csv";
pub const SUMMARY_FILE: &str = "report.md";

pub fn make_backend(config: &RunConfig) -> Arc<dyn MaskedLm> {
    match &config.backend {
        BackendChoice::Mock => Arc::new(MockBackend::new()),
        BackendChoice::Remote { url } => Arc::new(RemoteBackend::new(url.clone())),
    }
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }
    write_atomic(path, bytes).map_err(|e| CliError::output(path, e))
}

fn write_csv(
    path: &Path,
    fill: impl FnOnce(&mut Vec<u8>) -> Result<(), String>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| CliError::output(path, e))?;
    write_file(path, &buf)
}

fn csv_rows<I, R>(header: &[&str], rows: I) -> impl FnOnce(&mut Vec<u8>) -> Result<(), String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    move |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&header).map_err(|e| e.to_string())?;
        for r in rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required for this command")))
}

fn corpus(config: &RunConfig) -> Result<Vec<CorpusRecord>, CliError> {
    let path = require(&config.corpus_path, "corpus")?;
    let records = load_corpus(path).map_err(|e| CliError::input(path, e))?;
    if records.is_empty() {
        return Err(CliError::input(path, "corpus is empty"));
    }
    log::info!("loaded {} records from {}", records.len(), path.display());
    Ok(records)
}

/// One table per factor and rater group that has at least one value.
fn mos_tables(config: &RunConfig) -> Result<Vec<MosTable>, CliError> {
    let path = require(&config.annotations_path, "annotations")?;
    let annotations = load_annotations(path).map_err(|e| CliError::input(path, e))?;
    Ok(RaterKind::ALL
        .into_iter()
        .flat_map(|kind| Factor::ALL.into_iter().map(move |f| (f, kind)))
        .map(|(f, kind)| aggregate_mos(&annotations, f, kind))
        .filter(|t| !t.values.is_empty())
        .collect())
}

fn open_cache(config: &RunConfig) -> Result<ScoreCache, CliError> {
    match &config.cache_path {
        Some(p) => ScoreCache::open(p).map_err(|e| CliError::input(p, e)),
        None => Ok(ScoreCache::in_memory()),
    }
}

fn save_cache(config: &RunConfig, cache: &ScoreCache) -> Result<(), CliError> {
    cache.save().map_err(|e| {
        let path = config.cache_path.clone().unwrap_or_default();
        CliError::output(&path, e)
    })
}

/// Writes the missing-cell listing and returns how many cells failed, as
/// opposed to being absent by construction (no references).
fn write_missing(path: &Path, matrix: &ScoreMatrix) -> Result<usize, CliError> {
    let missing = matrix.missing();
    let failed = missing.iter().filter(|m| m.2 != NO_REFERENCES).count();
    for (col, row, reason) in missing.iter().filter(|m| m.2 != NO_REFERENCES) {
        log::warn!("{row} / {col}: {reason}");
    }
    write_csv(
        path,
        csv_rows(
            &["id", "metric", "reason"],
            missing.iter().map(|(c, r, why)| [*r, *c, *why]),
        ),
    )?;
    Ok(failed)
}

fn scoring_options(config: &RunConfig) -> ScoringOptions {
    ScoringOptions {
        blanc: BlancOptions {
            fold_case_uncased: config.fold_case_uncased,
        },
        ..ScoringOptions::default()
    }
}

fn score_specs(config: &RunConfig) -> Result<Vec<MetricSpec>, CliError> {
    let mut specs = config.metrics.clone();
    if config.sweep {
        let grid = sweep_grid(&config.models).map_err(|e| CliError::Config(e.to_string()))?;
        specs.extend(grid.into_iter().map(MetricSpec::Blanc));
    }
    let mut seen = BTreeSet::new();
    specs.retain(|s| seen.insert(s.name()));
    Ok(specs)
}

pub fn cmd_score(config: &RunConfig) -> Result<Outcome, CliError> {
    cmd_score_with(config, make_backend(config).as_ref())
}

/// Scores the corpus and writes `scores.csv` and `missing.csv`.
pub fn cmd_score_with(config: &RunConfig, backend: &dyn MaskedLm) -> Result<Outcome, CliError> {
    config.validate()?;
    let records = corpus(config)?;
    let specs = score_specs(config)?;
    let cache = open_cache(config)?;
    let options = scoring_options(config);
    let matrix = pool(config)?.install(|| score_corpus(&records, &specs, backend, &cache, &options));
    let out = &config.output_dir;
    let path = out.join(SCORES_FILE);
    let mut buf = Vec::new();
    matrix
        .write_csv(&mut buf)
        .map_err(|e| CliError::output(&path, e))?;
    write_file(&path, &buf)?;
    let failed = write_missing(&out.join(MISSING_FILE), &matrix)?;
    save_cache(config, &cache)?;
    log::info!(
        "scored {} records × {} metrics, {failed} failed cells",
        records.len(),
        specs.len()
    );
    Ok(Outcome::from_failures(failed))
}

fn write_report(path: &Path, entries: &[CorrelationEntry]) -> Result<(), CliError> {
    write_csv(path, |buf| {
        write_report_csv(entries, buf).map_err(|e| e.to_string())
    })
}

fn write_skipped(path: &Path, report: &CorrelationReport) -> Result<(), CliError> {
    write_csv(
        path,
        csv_rows(
            &["metric", "factor", "rater_kind", "reason"],
            report.skipped.iter().map(|s| {
                [
                    s.metric_name.clone(),
                    s.factor.to_string(),
                    s.rater_kind.to_string(),
                    s.reason.clone(),
                ]
            }),
        ),
    )
}

fn normality_rows(matrix: &ScoreMatrix, tables: &[MosTable]) -> Vec<[String; 6]> {
    let mut samples: Vec<(String, Vec<f64>)> = matrix
        .columns()
        .iter()
        .map(|c| (c.clone(), matrix.column_values(c).into_values().collect()))
        .collect();
    samples.extend(
        tables
            .iter()
            .map(|t| (format!("mos:{}", t.label()), t.values.values().copied().collect())),
    );
    samples
        .into_iter()
        .map(|(label, xs)| {
            let n = xs.len().to_string();
            match anderson_darling_normal(&xs) {
                Ok(ad) => [
                    label,
                    n,
                    format_score(ad.a2),
                    format_score(ad.a2_star),
                    ad.reject_at_5pct.to_string(),
                    String::new(),
                ],
                Err(e) => [label, n, String::new(), String::new(), String::new(), e.to_string()],
            }
        })
        .collect()
}

pub fn cmd_correlate(config: &RunConfig) -> Result<Outcome, CliError> {
    cmd_correlate_with(config)
}

/// Correlates a score table with the human judgements.
///
/// Writes `report.csv`, `skipped.csv`, `normality.csv`, one
/// `bars/bars_<rater>_<factor>.csv` per judgement table and, when a corpus
/// is given, mean-split sub-reports `splits/<criterion>_<low|high>.csv`.
pub fn cmd_correlate_with(config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    let scores_path = config.scores_file();
    let matrix =
        ScoreMatrix::read_csv_file(&scores_path).map_err(|e| CliError::input(&scores_path, e))?;
    let tables = mos_tables(config)?;
    let alpha = config.significance_level;
    let out = &config.output_dir;
    let workers = pool(config)?;

    let report = workers.install(|| correlation_report_with_alpha(&matrix, &tables, alpha));
    write_report(&out.join(REPORT_FILE), &report.entries)?;
    write_skipped(&out.join(SKIPPED_FILE), &report)?;
    for t in &tables {
        let path = out
            .join("bars")
            .join(format!("bars_{}_{}.csv", t.rater_kind, t.factor));
        write_csv(&path, |buf| {
            write_bar_csv(&report.entries, t.factor, t.rater_kind, buf).map_err(|e| e.to_string())
        })?;
    }
    write_csv(
        &out.join(NORMALITY_FILE),
        csv_rows(
            &["sample", "n", "a2", "a2_star", "reject_at_5pct", "note"],
            normality_rows(&matrix, &tables),
        ),
    )?;

    if config.corpus_path.is_some() {
        let records = corpus(config)?;
        let mut split_rows = Vec::new();
        for criterion in SplitCriterion::ALL {
            let split = split_by_mean(&records, criterion);
            for (group, ids) in [("low", split.low_set()), ("high", split.high_set())] {
                split_rows.push([
                    criterion.to_string(),
                    group.to_string(),
                    format_score(split.threshold),
                    ids.len().to_string(),
                ]);
                let sub = matrix.restrict_rows(&ids);
                let sub_report =
                    workers.install(|| correlation_report_with_alpha(&sub, &tables, alpha));
                let path = out.join("splits").join(format!("{criterion}_{group}.csv"));
                write_report(&path, &sub_report.entries)?;
            }
        }
        write_csv(
            &out.join(SPLITS_FILE),
            csv_rows(&["criterion", "group", "threshold", "n"], split_rows),
        )?;
    } else {
        log::info!("no corpus given; skipping mean-split sub-reports");
    }
    log::info!(
        "{} correlations, {} pairs skipped",
        report.entries.len(),
        report.skipped.len()
    );
    Ok(Outcome::Success)
}

/// The best `k` metrics per factor and rater group.
pub fn top_k_rows(entries: &[CorrelationEntry], k: usize) -> Vec<[String; 7]> {
    let by_name: BTreeMap<(&str, Factor, RaterKind), &CorrelationEntry> = entries
        .iter()
        .map(|e| ((e.metric_name.as_str(), e.factor, e.rater_kind), e))
        .collect();
    let mut rows = Vec::new();
    for kind in RaterKind::ALL {
        for factor in Factor::ALL {
            for (rank, (name, rho)) in rank_configs(entries, factor, kind)
                .into_iter()
                .take(k)
                .enumerate()
            {
                let e = by_name[&(name.as_str(), factor, kind)];
                rows.push([
                    factor.to_string(),
                    kind.to_string(),
                    (rank + 1).to_string(),
                    name,
                    format_score(rho),
                    format_score(e.p_value),
                    e.significant.to_string(),
                ]);
            }
        }
    }
    rows
}

pub fn cmd_sweep(config: &RunConfig) -> Result<Outcome, CliError> {
    cmd_sweep_with(config, make_backend(config).as_ref())
}

/// Scores every sweep configuration for the configured models. With
/// annotations, also ranks the configurations per factor and rater group.
pub fn cmd_sweep_with(config: &RunConfig, backend: &dyn MaskedLm) -> Result<Outcome, CliError> {
    config.validate()?;
    let records = corpus(config)?;
    let grid = sweep_grid(&config.models).map_err(|e| CliError::Config(e.to_string()))?;
    let cache = open_cache(config)?;
    let options = scoring_options(config).blanc;
    let workers = pool(config)?;
    let matrix = workers.install(|| run_sweep(&records, &grid, backend, &cache, options));
    save_cache(config, &cache)?;

    let out = &config.output_dir;
    let path = out.join(SWEEP_SCORES_FILE);
    let mut buf = Vec::new();
    matrix
        .write_csv(&mut buf)
        .map_err(|e| CliError::output(&path, e))?;
    write_file(&path, &buf)?;
    let failed = write_missing(&out.join(SWEEP_MISSING_FILE), &matrix)?;

    if config.annotations_path.is_some() {
        let tables = mos_tables(config)?;
        let alpha = config.significance_level;
        let report = workers.install(|| correlation_report_with_alpha(&matrix, &tables, alpha));
        write_report(&out.join(SWEEP_REPORT_FILE), &report.entries)?;
        write_skipped(&out.join(SWEEP_SKIPPED_FILE), &report)?;
        write_csv(
            &out.join(RANKING_FILE),
            csv_rows(
                &["factor", "rater_kind", "rank", "metric", "rho", "p", "significant"],
                top_k_rows(&report.entries, config.top_k),
            ),
        )?;
    }
    log::info!(
        "sweep: {} configurations × {} records, {failed} failed cells",
        grid.len(),
        records.len()
    );
    Ok(Outcome::from_failures(failed))
}

fn read_optional_csv(path: &Path) -> Result<Option<Vec<csv::StringRecord>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input(path, e))?;
    reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
        .map_err(|e| CliError::input(path, e))
}

/// Renders `report.md` from the CSV outputs already in the output directory.
pub fn cmd_report(config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    let out = &config.output_dir;
    let report_path = out.join(REPORT_FILE);
    let file = std::fs::File::open(&report_path).map_err(|e| CliError::input(&report_path, e))?;
    let entries = read_report_csv(file).map_err(|e| CliError::input(&report_path, e))?;

    let mut md = String::from("# Metric correlation report\n\n");
    let _ = writeln!(
        md,
        "Spearman correlation with mean opinion scores. `*` marks correlations that are not significant at α = {}.\n",
        config.significance_level
    );
    for kind in RaterKind::ALL {
        for factor in Factor::ALL {
            let ranked = rank_configs(&entries, factor, kind);
            if ranked.is_empty() {
                continue;
            }
            let _ = writeln!(md, "## {kind}: {factor}\n");
            md.push_str("| metric | rho | p | n |\n|---|---:|---:|---:|\n");
            for (name, _) in ranked {
                let e = entries
                    .iter()
                    .find(|e| e.metric_name == name && e.factor == factor && e.rater_kind == kind)
                    .expect("ranked entry exists");
                let mark = if e.significant { "" } else { "*" };
                let _ = writeln!(
                    md,
                    "| {name} | {:.3}{mark} | {:.4} | {} |",
                    e.rho, e.p_value, e.n
                );
            }
            md.push('\n');
        }
    }

    if let Some(rows) = read_optional_csv(&out.join(RANKING_FILE))? {
        md.push_str("## Best sweep configurations\n\n");
        md.push_str("| factor | raters | rank | configuration | rho |\n|---|---|---:|---|---:|\n");
        for r in rows {
            let _ = writeln!(md, "| {} | {} | {} | {} | {} |", &r[0], &r[1], &r[2], &r[3], &r[4]);
        }
        md.push('\n');
    }
    if let Some(rows) = read_optional_csv(&out.join(SPLITS_FILE))? {
        md.push_str("## Mean splits\n\n| criterion | group | threshold | n |\n|---|---|---:|---:|\n");
        for r in rows {
            let _ = writeln!(md, "| {} | {} | {} | {} |", &r[0], &r[1], &r[2], &r[3]);
        }
        md.push('\n');
    }
    if let Some(rows) = read_optional_csv(&out.join(NORMALITY_FILE))? {
        let rejected: Vec<&str> = rows
            .iter()
            .filter(|r| &r[4] == "true")
            .map(|r| &r[0])
            .collect();
        md.push_str("## Normality\n\n");
        if rejected.is_empty() {
            md.push_str("No sample rejects normality at 5% (Anderson-Darling).\n");
        } else {
            let _ = writeln!(
                md,
                "Anderson-Darling rejects normality at 5% for: {}.",
                rejected.join(", ")
            );
        }
    }
    write_file(&out.join(SUMMARY_FILE), md.as_bytes())?;
    Ok(Outcome::Success)
}
