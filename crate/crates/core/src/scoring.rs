//! Fills a [`ScoreMatrix`] for a corpus and a list of metrics, consulting
//! the cache for every cell that needs the language model.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::backend::{MaskedLm, BERTSCORE_MODEL};
use crate::blanc::{blanc_help_with, BlancConfig, BlancOptions};
use crate::cache::{blanc_key, metric_key, CacheEntry, ScoreCache};
use crate::corpus::CorpusRecord;
use crate::lexical::{self, bertscore_multi, bleu, js_similarity, rouge_l_multi, rouge_n_multi};
use crate::matrix::{Cell, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LexicalMetric {
    Bleu,
    Rouge1,
    Rouge2,
    RougeL,
    BertScoreF,
    Js,
}

impl LexicalMetric {
    pub const ALL: [LexicalMetric; 6] = [
        LexicalMetric::Bleu,
        LexicalMetric::Rouge1,
        LexicalMetric::Rouge2,
        LexicalMetric::RougeL,
        LexicalMetric::BertScoreF,
        LexicalMetric::Js,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LexicalMetric::Bleu => lexical::BLEU,
            LexicalMetric::Rouge1 => lexical::ROUGE_1,
            LexicalMetric::Rouge2 => lexical::ROUGE_2,
            LexicalMetric::RougeL => lexical::ROUGE_L,
            LexicalMetric::BertScoreF => lexical::BERTSCORE_F,
            LexicalMetric::Js => lexical::JS,
        }
    }

    pub fn needs_backend(self) -> bool {
        self == LexicalMetric::BertScoreF
    }
}

/// A column of the score table.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MetricSpec {
    Lexical(LexicalMetric),
    Blanc(BlancConfig),
}

impl MetricSpec {
    pub fn name(&self) -> String {
        match self {
            MetricSpec::Lexical(m) => m.name().to_string(),
            MetricSpec::Blanc(c) => c.name(),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for MetricSpec {
    type Err = String;

    /// Baseline column names (`ROUGE-1`, `JS`, ...) or BLANC configuration
    /// names (`B_L4_Ll2_Lf1`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(m) = LexicalMetric::ALL.into_iter().find(|m| m.name() == s) {
            return Ok(MetricSpec::Lexical(m));
        }
        BlancConfig::from_name(s)
            .map(MetricSpec::Blanc)
            .map_err(|_| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringOptions {
    pub blanc: BlancOptions,
    pub bertscore_model: String,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            blanc: BlancOptions::default(),
            bertscore_model: BERTSCORE_MODEL.to_string(),
        }
    }
}

/// Reason recorded for reference-based metrics on records without references.
pub const NO_REFERENCES: &str = "no reference summaries";

fn lexical_value(
    metric: LexicalMetric,
    record: &CorpusRecord,
    backend: &dyn MaskedLm,
    options: &ScoringOptions,
) -> Result<f64, String> {
    let refs = &record.references;
    let cand = record.summary.as_str();
    let need_refs = |v: Option<f64>| v.ok_or_else(|| NO_REFERENCES.to_string());
    match metric {
        LexicalMetric::Js => Ok(js_similarity(cand, &record.source)),
        LexicalMetric::Bleu => {
            if refs.is_empty() {
                Err(NO_REFERENCES.into())
            } else {
                Ok(bleu(cand, refs))
            }
        }
        LexicalMetric::Rouge1 => need_refs(rouge_n_multi(cand, refs, 1).map(|s| s.f1)),
        LexicalMetric::Rouge2 => need_refs(rouge_n_multi(cand, refs, 2).map(|s| s.f1)),
        LexicalMetric::RougeL => need_refs(rouge_l_multi(cand, refs).map(|s| s.f1)),
        LexicalMetric::BertScoreF => {
            let v = bertscore_multi(cand, refs, backend, &options.bertscore_model)
                .map_err(|e| e.to_string())?;
            need_refs(v)
        }
    }
}

/// Computes one cell. Cells that need the model are read from and written
/// to `cache`; failures become [`Cell::Missing`] with the reason.
pub fn score_cell(
    spec: &MetricSpec,
    record: &CorpusRecord,
    backend: &dyn MaskedLm,
    cache: &ScoreCache,
    options: &ScoringOptions,
) -> Cell {
    let key = match spec {
        MetricSpec::Lexical(m) if !m.needs_backend() => None,
        MetricSpec::Lexical(m) => Some(metric_key(m.name(), record)),
        MetricSpec::Blanc(c) => Some(blanc_key(c, record)),
    };
    if let Some(hit) = key.as_ref().and_then(|k| cache.get(k)) {
        return Cell::Value(hit.value);
    }
    let (result, counts) = match spec {
        MetricSpec::Lexical(m) => (lexical_value(*m, record, backend, options), None),
        MetricSpec::Blanc(c) => match blanc_help_with(record, c, backend, options.blanc) {
            Ok(s) => (Ok(s.score), Some(s.counts)),
            Err(e) => (Err(e.to_string()), None),
        },
    };
    match result {
        Ok(value) => {
            if let Some(k) = key {
                cache.insert(
                    k,
                    CacheEntry {
                        metric: spec.name(),
                        record_id: record.id.clone(),
                        value,
                        counts,
                    },
                );
            }
            Cell::Value(value)
        }
        Err(reason) => Cell::Missing(reason),
    }
}

/// Scores every (metric, record) cell. Cells run on the current rayon pool;
/// the table layout follows corpus order and `specs` order regardless.
pub fn score_corpus(
    corpus: &[CorpusRecord],
    specs: &[MetricSpec],
    backend: &dyn MaskedLm,
    cache: &ScoreCache,
    options: &ScoringOptions,
) -> ScoreMatrix {
    let cells: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..corpus.len()).map(move |r| (s, r)))
        .collect();
    let values: Vec<Cell> = cells
        .par_iter()
        .map(|&(s, r)| score_cell(&specs[s], &corpus[r], backend, cache, options))
        .collect();
    let mut matrix = ScoreMatrix::with_rows(corpus.iter().map(|r| r.id.clone()));
    for spec in specs {
        matrix.add_column(spec.name());
    }
    for (&(s, r), cell) in cells.iter().zip(values) {
        matrix.set(&specs[s].name(), &corpus[r].id, cell);
    }
    matrix
}

/// BLANC over every configuration of the grid.
pub fn run_sweep(
    corpus: &[CorpusRecord],
    configs: &[BlancConfig],
    backend: &dyn MaskedLm,
    cache: &ScoreCache,
    options: BlancOptions,
) -> ScoreMatrix {
    let specs: Vec<MetricSpec> = configs.iter().cloned().map(MetricSpec::Blanc).collect();
    let options = ScoringOptions {
        blanc: options,
        ..ScoringOptions::default()
    };
    score_corpus(corpus, &specs, backend, cache, &options)
}
