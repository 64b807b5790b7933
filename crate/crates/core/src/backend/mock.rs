use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BackendDescriptor, BackendError, MaskPrediction, MaskQuery, MaskedLm, GERMAN_MODELS,
};

const MOCK_EMBEDDING_DIM: usize = 32;

/// What the mock predicts when no scripted answer applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FallbackRule {
    /// Most frequent visible token; ties go to the lexicographically smallest.
    MostFrequentVisible,
    Constant(String),
}

#[derive(Debug, Clone)]
struct ScriptedAnswer {
    case: String,
    position: usize,
    token: String,
}

/// Deterministic table-driven stand-in for a masked language model.
///
/// A scripted answer `(case, position) -> token` fires when `case` is one of
/// the query's visible tokens and `position` is masked. Tokenization splits
/// on whitespace and punctuation, then greedily into vocabulary pieces when
/// a vocabulary is configured. Embeddings are unit vectors seeded by a hash
/// of the token string, unless a vector has been scripted for that token.
///
/// Every trait call increments a counter readable through [`Self::calls`].
#[derive(Debug)]
pub struct MockBackend {
    models: BTreeMap<String, BackendDescriptor>,
    vocab: HashSet<String>,
    answers: Vec<ScriptedAnswer>,
    fallback: FallbackRule,
    vectors: HashMap<String, Vec<f64>>,
    calls: AtomicUsize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for MockBackend {
    fn clone(&self) -> Self {
        Self {
            models: self.models.clone(),
            vocab: self.vocab.clone(),
            answers: self.answers.clone(),
            fallback: self.fallback.clone(),
            vectors: self.vectors.clone(),
            calls: AtomicUsize::new(0),
        }
    }
}

impl MockBackend {
    /// Serves the three German models with 512-token windows.
    pub fn new() -> Self {
        Self::with_models(GERMAN_MODELS)
    }

    pub fn with_models<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let models = ids
            .into_iter()
            .map(|id| {
                let d = BackendDescriptor::bert(id, MOCK_EMBEDDING_DIM);
                (d.model_id.clone(), d)
            })
            .collect();
        Self {
            models,
            vocab: HashSet::new(),
            answers: Vec::new(),
            fallback: FallbackRule::MostFrequentVisible,
            vectors: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn max_sequence_length(mut self, n: usize) -> Self {
        for d in self.models.values_mut() {
            d.max_sequence_length = n;
        }
        self
    }

    pub fn embedding_dim(mut self, dim: usize) -> Self {
        for d in self.models.values_mut() {
            d.embedding_dim = dim;
        }
        self
    }

    pub fn vocab<I, S>(mut self, pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.vocab.extend(pieces.into_iter().map(Into::into));
        self
    }

    pub fn answer(mut self, case: &str, position: usize, token: &str) -> Self {
        self.answers.push(ScriptedAnswer {
            case: case.into(),
            position,
            token: token.into(),
        });
        self
    }

    pub fn fallback(mut self, rule: FallbackRule) -> Self {
        self.fallback = rule;
        self
    }

    pub fn vector(mut self, token: &str, v: Vec<f64>) -> Self {
        self.vectors.insert(token.into(), v);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    fn count(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    fn model(&self, model_id: &str) -> Result<&BackendDescriptor, BackendError> {
        self.models
            .get(model_id)
            .ok_or_else(|| BackendError::UnknownModel(model_id.to_string()))
    }

    fn split_word(&self, word: &str, marker: &str) -> Vec<String> {
        if self.vocab.is_empty() || self.vocab.contains(word) {
            return vec![word.to_string()];
        }
        let mut pieces = Vec::new();
        let mut rest = word;
        while !rest.is_empty() {
            let piece = rest
                .char_indices()
                .map(|(i, c)| &rest[..i + c.len_utf8()])
                .rev()
                .find(|p| self.vocab.contains(*p));
            match piece {
                Some(p) => {
                    pieces.push(if pieces.is_empty() {
                        p.to_string()
                    } else {
                        format!("{marker}{p}")
                    });
                    rest = &rest[p.len()..];
                }
                None => return vec![word.to_string()],
            }
        }
        pieces
    }

    fn fallback_token(&self, query: &MaskQuery, d: &BackendDescriptor) -> String {
        match &self.fallback {
            FallbackRule::Constant(t) => t.clone(),
            FallbackRule::MostFrequentVisible => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for t in query.visible_tokens(&d.special_tokens) {
                    *counts.entry(t).or_default() += 1;
                }
                let mut best: Option<(&str, usize)> = None;
                for (t, c) in counts {
                    if best.is_none_or(|(_, bc)| c > bc) {
                        best = Some((t, c));
                    }
                }
                best.map_or_else(|| d.special_tokens.mask.clone(), |(t, _)| t.to_string())
            }
        }
    }

    fn hashed_unit_vector(token: &str, dim: usize) -> Vec<f64> {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in token.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl MaskedLm for MockBackend {
    fn descriptor(&self, model_id: &str) -> Result<BackendDescriptor, BackendError> {
        self.count();
        self.model(model_id).cloned()
    }

    fn predict_masked(&self, query: &MaskQuery) -> Result<MaskPrediction, BackendError> {
        self.count();
        let d = self.model(&query.model_id)?;
        query.validate(d)?;
        let visible: HashSet<&str> = query.visible_tokens(&d.special_tokens).collect();
        let predicted = query
            .mask_positions
            .iter()
            .map(|&p| {
                self.answers
                    .iter()
                    .find(|a| a.position == p && visible.contains(a.case.as_str()))
                    .map_or_else(|| self.fallback_token(query, d), |a| a.token.clone())
            })
            .collect();
        Ok(MaskPrediction { predicted })
    }

    fn tokenize(&self, text: &str, model_id: &str) -> Result<Vec<String>, BackendError> {
        self.count();
        let d = self.model(model_id)?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let text = if d.uncased {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let mut tokens = Vec::new();
        for chunk in text.split_whitespace() {
            let mut word = String::new();
            for c in chunk.chars() {
                if c.is_alphanumeric() {
                    word.push(c);
                } else {
                    if !word.is_empty() {
                        tokens.extend(self.split_word(&word, &d.continuation_marker));
                        word.clear();
                    }
                    tokens.push(c.to_string());
                }
            }
            if !word.is_empty() {
                tokens.extend(self.split_word(&word, &d.continuation_marker));
            }
        }
        Ok(tokens)
    }

    fn embed_tokens(&self, text: &str, model_id: &str) -> Result<Vec<Vec<f64>>, BackendError> {
        let tokens = self.tokenize(text, model_id)?;
        let dim = self.model(model_id)?.embedding_dim;
        Ok(tokens
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| Self::hashed_unit_vector(t, dim))
            })
            .collect())
    }
}
