//! Summary-quality evaluation for German (and any other language with a
//! masked language model).
//!
//! * [`blanc`]: the reference-free BLANC-help score and its parameter grid.
//! * [`lexical`]: ROUGE, BLEU, BERTScore-F and Jensen-Shannon baselines.
//! * [`stats`]: Anderson-Darling, Spearman with ties, mean splits, reports.
//! * [`backend`]: the masked-LM contract, a mock and an HTTP client.
//! * [`corpus`]: JSONL ingestion and MOS aggregation.

pub mod backend;
pub mod blanc;
pub mod cache;
pub mod corpus;
pub mod lexical;
pub mod matrix;
pub mod scoring;
pub mod stats;
pub mod tokenization;

pub use backend::{BackendDescriptor, BackendError, MaskPrediction, MaskQuery, MaskedLm};
pub use blanc::{blanc_help, BlancConfig, BlancCounts, BlancError, BlancScore, MaskingPlan};
pub use cache::ScoreCache;
pub use corpus::{AnnotationRecord, CorpusRecord, Factor, MosTable, RaterKind};
pub use matrix::{Cell, ScoreMatrix};
pub use scoring::{run_sweep, score_corpus, MetricSpec};
pub use stats::{CorrelationEntry, GroupSplit};
pub use tokenization::{SentenceTokens, SubToken, TokenKind};
