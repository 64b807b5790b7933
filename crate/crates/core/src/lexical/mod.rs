//! Baseline metrics: ROUGE-1/2/L, BLEU and BERTScore-F against gold
//! summaries, and the reference-free Jensen-Shannon similarity against the
//! source.
//!
//! All lexical metrics share one word segmentation: Unicode word boundaries,
//! lowercased, punctuation dropped, no stemming.

mod bertscore;
mod bleu;
mod js;
mod rouge;

pub use bertscore::{bertscore_f, bertscore_multi, greedy_match};
pub use bleu::{bleu, modified_precision, BLEU_MAX_ORDER};
pub use js::{js_divergence, js_similarity, WordDistribution};
pub use rouge::{rouge_l, rouge_l_multi, rouge_n, rouge_n_multi};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

/// Column names the baselines register in a score table.
pub const BLEU: &str = "BLEU";
pub const ROUGE_1: &str = "ROUGE-1";
pub const ROUGE_2: &str = "ROUGE-2";
pub const ROUGE_L: &str = "ROUGE-L";
pub const BERTSCORE_F: &str = "BERTScore-F";
pub const JS: &str = "JS";

pub const ALL_METRICS: [&str; 6] = [BLEU, ROUGE_1, ROUGE_2, ROUGE_L, BERTSCORE_F, JS];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    /// From an overlap count and the two sequence sizes it is measured against.
    pub fn from_overlap(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |n: usize| if n == 0 { 0.0 } else { overlap as f64 / n as f64 };
        Self::new(ratio(candidate_total), ratio(reference_total))
    }
}

/// Lowercased Unicode words.
pub fn words(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

pub(crate) fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}
