//! Masked language model contract.
//!
//! A backend fills masked positions with its top-1 token, tokenizes text
//! with the model's own vocabulary and returns per-token embeddings. Two
//! implementations exist: [`MockBackend`] for hermetic runs and
//! [`RemoteBackend`] for the HTTP inference service.

mod mock;
mod remote;

pub use mock::{FallbackRule, MockBackend};
pub use remote::{RemoteBackend, RetryPolicy};

use serde::{Deserialize, Serialize};

use crate::tokenization::DEFAULT_CONTINUATION_MARKER;

/// The German models evaluated in the sweep.
pub const GERMAN_MODELS: [&str; 3] = [
    "bert-base-german-cased",
    "bert-base-german-dbmdz-cased",
    "bert-base-german-dbmdz-uncased",
];

/// Model used for BERTScore.
pub const BERTSCORE_MODEL: &str = "bert-base-german-cased";

pub const MIN_SEQUENCE_LENGTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("input of {len} tokens exceeds the model limit of {max}")]
    OverLength { len: usize, max: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("text is empty")]
    EmptyText,
    #[error("service rejected request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub cls: String,
    pub sep: String,
    pub mask: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            cls: "[CLS]".into(),
            sep: "[SEP]".into(),
            mask: "[MASK]".into(),
        }
    }
}

impl SpecialTokens {
    pub fn is_special(&self, token: &str) -> bool {
        token == self.cls || token == self.sep || token == self.mask
    }
}

/// What a backend declares about one model it serves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub model_id: String,
    pub max_sequence_length: usize,
    #[serde(default = "default_marker")]
    pub continuation_marker: String,
    #[serde(default)]
    pub embedding_dim: usize,
    /// The tokenizer lowercases its input.
    #[serde(default)]
    pub uncased: bool,
    #[serde(default = "default_loaded")]
    pub loaded: bool,
    #[serde(default)]
    pub special_tokens: SpecialTokens,
}

fn default_marker() -> String {
    DEFAULT_CONTINUATION_MARKER.to_string()
}

fn default_loaded() -> bool {
    true
}

impl BackendDescriptor {
    /// A BERT-style descriptor with a 512-token window.
    pub fn bert(model_id: impl Into<String>, embedding_dim: usize) -> Self {
        let model_id = model_id.into();
        let uncased = model_id.ends_with("uncased");
        Self {
            model_id,
            max_sequence_length: 512,
            continuation_marker: default_marker(),
            embedding_dim,
            uncased,
            loaded: true,
            special_tokens: SpecialTokens::default(),
        }
    }
}

/// A tokenized input with some positions masked.
///
/// Masked positions are expected to already hold the mask token; backends
/// treat them as hidden regardless of their content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskQuery {
    pub tokens: Vec<String>,
    pub mask_positions: Vec<usize>,
    pub model_id: String,
}

impl MaskQuery {
    /// Checks structural invariants and the model length limit.
    pub fn validate(&self, descriptor: &BackendDescriptor) -> Result<(), BackendError> {
        if self.tokens.len() > descriptor.max_sequence_length {
            return Err(BackendError::OverLength {
                len: self.tokens.len(),
                max: descriptor.max_sequence_length,
            });
        }
        if self.mask_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BackendError::InvalidQuery(
                "mask positions must be strictly increasing".into(),
            ));
        }
        let special = &descriptor.special_tokens;
        for &p in &self.mask_positions {
            let Some(tok) = self.tokens.get(p) else {
                return Err(BackendError::InvalidQuery(format!(
                    "mask position {p} is outside the {} input tokens",
                    self.tokens.len()
                )));
            };
            if tok == &special.cls || tok == &special.sep {
                return Err(BackendError::InvalidQuery(format!(
                    "mask position {p} points at special token {tok}"
                )));
            }
        }
        Ok(())
    }

    /// Tokens at unmasked positions, excluding special tokens.
    pub fn visible_tokens<'a>(
        &'a self,
        special: &'a SpecialTokens,
    ) -> impl Iterator<Item = &'a str> + 'a {
        let mut masked = self.mask_positions.iter().peekable();
        self.tokens.iter().enumerate().filter_map(move |(i, t)| {
            while masked.peek().is_some_and(|&&p| p < i) {
                masked.next();
            }
            if masked.peek() == Some(&&i) || special.is_special(t) {
                None
            } else {
                Some(t.as_str())
            }
        })
    }
}

/// Top-1 predictions aligned with `MaskQuery::mask_positions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPrediction {
    pub predicted: Vec<String>,
}

pub trait MaskedLm: Send + Sync {
    fn descriptor(&self, model_id: &str) -> Result<BackendDescriptor, BackendError>;

    fn predict_masked(&self, query: &MaskQuery) -> Result<MaskPrediction, BackendError>;

    /// Element-wise `predict_masked`; a failing element never hides the others.
    fn batch(&self, queries: &[MaskQuery]) -> Vec<Result<MaskPrediction, BackendError>> {
        queries.iter().map(|q| self.predict_masked(q)).collect()
    }

    fn tokenize(&self, text: &str, model_id: &str) -> Result<Vec<String>, BackendError>;

    /// One vector per token of `tokenize(text, model_id)`.
    fn embed_tokens(&self, text: &str, model_id: &str) -> Result<Vec<Vec<f64>>, BackendError>;
}

impl<T: MaskedLm + ?Sized> MaskedLm for std::sync::Arc<T> {
    fn descriptor(&self, model_id: &str) -> Result<BackendDescriptor, BackendError> {
        (**self).descriptor(model_id)
    }
    fn predict_masked(&self, query: &MaskQuery) -> Result<MaskPrediction, BackendError> {
        (**self).predict_masked(query)
    }
    fn batch(&self, queries: &[MaskQuery]) -> Vec<Result<MaskPrediction, BackendError>> {
        (**self).batch(queries)
    }
    fn tokenize(&self, text: &str, model_id: &str) -> Result<Vec<String>, BackendError> {
        (**self).tokenize(text, model_id)
    }
    fn embed_tokens(&self, text: &str, model_id: &str) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed_tokens(text, model_id)
    }
}

/// Request and response bodies of the HTTP protocol.
pub mod wire {
    use super::BackendDescriptor;
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct FillMaskInput {
        pub tokens: Vec<String>,
        pub mask_positions: Vec<usize>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct FillMaskRequest {
        pub model: String,
        pub inputs: Vec<FillMaskInput>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct FillMaskResponse {
        pub predictions: Vec<Vec<String>>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TextRequest {
        pub model: String,
        pub text: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TokenizeResponse {
        pub tokens: Vec<String>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct EmbedResponse {
        pub vectors: Vec<Vec<f64>>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ModelsResponse {
        pub models: Vec<BackendDescriptor>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub error: String,
    }
}
