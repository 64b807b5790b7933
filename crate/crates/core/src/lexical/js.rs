use std::collections::BTreeMap;

use super::words;

/// Word frequencies of one text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordDistribution {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl WordDistribution {
    pub fn from_text(text: &str) -> Self {
        let mut counts = BTreeMap::new();
        for w in words(text) {
            *counts.entry(w).or_insert(0) += 1;
        }
        let total = counts.values().sum();
        Self { counts, total }
    }

    pub fn probability(&self, word: &str) -> f64 {
        match self.counts.get(word) {
            Some(&c) if self.total > 0 => c as f64 / self.total as f64,
            _ => 0.0,
        }
    }
}

/// Base-2 Jensen-Shannon divergence, in `[0, 1]`.
pub fn js_divergence(p: &WordDistribution, q: &WordDistribution) -> f64 {
    let vocab: std::collections::BTreeSet<&String> =
        p.counts.keys().chain(q.counts.keys()).collect();
    // Each word's term is evaluated on the ordered pair so that swapping
    // the arguments gives a bit-identical result.
    let sum: f64 = vocab
        .into_iter()
        .map(|w| {
            let (a, b) = {
                let (pw, qw) = (p.probability(w), q.probability(w));
                if pw <= qw { (pw, qw) } else { (qw, pw) }
            };
            let m = 0.5 * (a + b);
            let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
            term(a) + term(b)
        })
        .sum();
    (0.5 * sum).clamp(0.0, 1.0)
}

/// `1 - JSD` between the word distributions of summary and source. A text
/// without any word shares nothing and scores 0.
pub fn js_similarity(summary: &str, source: &str) -> f64 {
    let p = WordDistribution::from_text(summary);
    let q = WordDistribution::from_text(source);
    if p.total == 0 || q.total == 0 {
        return 0.0;
    }
    1.0 - js_divergence(&p, &q)
}
