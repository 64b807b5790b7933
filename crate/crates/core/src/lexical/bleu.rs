use std::collections::HashMap;

use super::{ngram_counts, words};

pub const BLEU_MAX_ORDER: usize = 4;

/// Clipped n-gram matches and the candidate's n-gram total.
pub fn modified_precision<T: AsRef<str>>(candidate: &[T], references: &[Vec<T>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in references {
        for (g, k) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(k);
        }
    }
    let matches = cand
        .iter()
        .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, cand.values().sum())
}

/// Sentence-level BLEU-4.
///
/// Orders 2..=4 with zero matches use add-one smoothing `1 / (total + 1)`;
/// a candidate without any unigram match scores 0. The brevity penalty uses
/// the reference length closest to the candidate length (shorter on ties).
pub fn bleu<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    let cand = words(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| words(r.as_ref())).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let (matches, total) = modified_precision(&cand, &refs, n);
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("at least one reference");
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (log_sum / BLEU_MAX_ORDER as f64).exp()
}
