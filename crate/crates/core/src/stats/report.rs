use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spearman::spearman;
use crate::corpus::{CorpusRecord, Factor, MosTable, RaterKind};
use crate::matrix::{format_score, ScoreMatrix};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Correlation between one metric column and one human-judgement table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric_name: String,
    pub factor: Factor,
    pub rater_kind: RaterKind,
    pub rho: f64,
    pub p_value: f64,
    pub significant: bool,
    pub n: usize,
}

/// A metric/table pair that produced no entry, and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedPair {
    pub metric_name: String,
    pub factor: Factor,
    pub rater_kind: RaterKind,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
    pub skipped: Vec<SkippedPair>,
}

/// Spearman correlation of every score column against every MOS table,
/// over the ids both sides have values for.
pub fn correlation_report(matrix: &ScoreMatrix, tables: &[MosTable]) -> CorrelationReport {
    correlation_report_with_alpha(matrix, tables, DEFAULT_ALPHA)
}

pub fn correlation_report_with_alpha(
    matrix: &ScoreMatrix,
    tables: &[MosTable],
    alpha: f64,
) -> CorrelationReport {
    let columns: Vec<(String, BTreeMap<String, f64>)> = matrix
        .columns()
        .iter()
        .map(|c| (c.clone(), matrix.column_values(c)))
        .collect();
    let pairs: Vec<(&(String, BTreeMap<String, f64>), &MosTable)> = columns
        .iter()
        .flat_map(|c| tables.iter().map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<Result<CorrelationEntry, SkippedPair>> = pairs
        .par_iter()
        .map(|((name, scores), table)| {
            let skip = |reason: String| SkippedPair {
                metric_name: name.clone(),
                factor: table.factor,
                rater_kind: table.rater_kind,
                reason,
            };
            let (x, y): (Vec<f64>, Vec<f64>) = scores
                .iter()
                .filter_map(|(id, &s)| table.values.get(id).map(|&m| (s, m)))
                .unzip();
            if x.len() < 3 {
                return Err(skip(format!("only {} overlapping summaries", x.len())));
            }
            let c = spearman(&x, &y).map_err(|e| skip(e.to_string()))?;
            Ok(CorrelationEntry {
                metric_name: name.clone(),
                factor: table.factor,
                rater_kind: table.rater_kind,
                rho: c.rho,
                p_value: c.p_value,
                significant: c.p_value < alpha,
                n: c.n,
            })
        })
        .collect();
    let mut report = CorrelationReport::default();
    for o in outcomes {
        match o {
            Ok(e) => report.entries.push(e),
            Err(s) => {
                log::warn!(
                    "skipping {} vs {}:{}: {}",
                    s.metric_name,
                    s.rater_kind,
                    s.factor,
                    s.reason
                );
                report.skipped.push(s);
            }
        }
    }
    report
}

/// Metrics for one factor and rater group, best first; equal rho values are
/// ordered by name.
pub fn rank_configs(
    entries: &[CorrelationEntry],
    factor: Factor,
    rater_kind: RaterKind,
) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = entries
        .iter()
        .filter(|e| e.factor == factor && e.rater_kind == rater_kind)
        .map(|e| (e.metric_name.clone(), e.rho))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Writes `metric,factor,rater_kind,rho,p,significant,n`.
pub fn write_report_csv<W: io::Write>(entries: &[CorrelationEntry], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "factor", "rater_kind", "rho", "p", "significant", "n"])?;
    for e in entries {
        out.write_record([
            e.metric_name.clone(),
            e.factor.to_string(),
            e.rater_kind.to_string(),
            format_score(e.rho),
            format_score(e.p_value),
            e.significant.to_string(),
            e.n.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReportReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Field { row: usize, message: String },
}

pub fn read_report_csv<R: io::Read>(r: R) -> Result<Vec<CorrelationEntry>, ReportReadError> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let err = |message: String| ReportReadError::Field { row, message };
        out.push(CorrelationEntry {
            metric_name: field(0).to_string(),
            factor: field(1)
                .parse()
                .map_err(|f| err(format!("unknown factor `{f}`")))?,
            rater_kind: field(2)
                .parse()
                .map_err(|k| err(format!("unknown rater kind `{k}`")))?,
            rho: field(3).parse().map_err(|_| err("bad rho".into()))?,
            p_value: field(4).parse().map_err(|_| err("bad p".into()))?,
            significant: field(5).parse().map_err(|_| err("bad significant flag".into()))?,
            n: field(6).parse().map_err(|_| err("bad n".into()))?,
        });
    }
    Ok(out)
}

/// Bar-chart data for one factor and rater group: `metric,rho,significant,marker`,
/// where `marker` is `*` for correlations that are not significant.
pub fn write_bar_csv<W: io::Write>(
    entries: &[CorrelationEntry],
    factor: Factor,
    rater_kind: RaterKind,
    w: W,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "rho", "significant", "marker"])?;
    for e in entries
        .iter()
        .filter(|e| e.factor == factor && e.rater_kind == rater_kind)
    {
        out.write_record([
            e.metric_name.as_str(),
            &format_score(e.rho),
            if e.significant { "true" } else { "false" },
            if e.significant { "" } else { "*" },
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    SourceLength,
    SummaryLength,
    /// Summary words divided by source words.
    Compression,
}

impl SplitCriterion {
    pub const ALL: [SplitCriterion; 3] = [
        SplitCriterion::SourceLength,
        SplitCriterion::SummaryLength,
        SplitCriterion::Compression,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitCriterion::SourceLength => "source_length",
            SplitCriterion::SummaryLength => "summary_length",
            SplitCriterion::Compression => "compression",
        }
    }

    pub fn value(self, record: &CorpusRecord) -> f64 {
        match self {
            SplitCriterion::SourceLength => record.source_words() as f64,
            SplitCriterion::SummaryLength => record.summary_words() as f64,
            SplitCriterion::Compression => record.compression(),
        }
    }
}

impl fmt::Display for SplitCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSplit {
    pub criterion: SplitCriterion,
    /// Arithmetic mean of the criterion over all records.
    pub threshold: f64,
    /// Records with values below the mean.
    pub low_ids: Vec<String>,
    /// Records with values at or above the mean.
    pub high_ids: Vec<String>,
}

impl GroupSplit {
    pub fn low_set(&self) -> BTreeSet<String> {
        self.low_ids.iter().cloned().collect()
    }

    pub fn high_set(&self) -> BTreeSet<String> {
        self.high_ids.iter().cloned().collect()
    }
}

/// Two groups around the mean of `criterion`.
pub fn split_by_mean(records: &[CorpusRecord], criterion: SplitCriterion) -> GroupSplit {
    let values: Vec<f64> = records.iter().map(|r| criterion.value(r)).collect();
    let threshold = mean_threshold(&values);
    let (mut low_ids, mut high_ids) = (Vec::new(), Vec::new());
    for (r, &v) in records.iter().zip(&values) {
        if v < threshold {
            low_ids.push(r.id.clone());
        } else {
            high_ids.push(r.id.clone());
        }
    }
    GroupSplit {
        criterion,
        threshold,
        low_ids,
        high_ids,
    }
}

/// The arithmetic mean, except that identical values yield that value
/// itself so rounding cannot push every record below the threshold.
fn mean_threshold(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    if values.iter().all(|&v| v == first) {
        return first;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
