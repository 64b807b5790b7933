//! BLANC-help: how much better a masked language model fills in the
//! document's tokens when the summary is placed in front of each sentence,
//! compared to a neutral filler of the same length.
//!
//! For every sentence of the source, [`build_masking_plans`] produces `gap`
//! passes; pass `k` masks the eligible tokens at positions `p ≡ k (mod gap)`.
//! Each pass becomes two queries that differ only in their prefix:
//!
//! ```text
//! assisted:   [CLS] summary tokens [SEP] sentence with masks [SEP]
//! unassisted: [CLS] . . . . . .    [SEP] sentence with masks [SEP]
//! ```
//!
//! Every masked token yields one pair (unassisted correct, assisted correct)
//! and the pooled counts give `score = (S01 - S10) / N`.

mod sweep;

pub use sweep::{
    sweep_grid, GAP_GRID, L_FOLLOW_GRID, L_LEAD_GRID, L_NORMAL_GRID, RECOMMENDED_MODEL,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendDescriptor, BackendError, MaskQuery, MaskedLm};
use crate::corpus::CorpusRecord;
use crate::tokenization::{
    classify_tokens, split_sentences, SentenceTokens, SubToken, TokenKind, TokenizationError,
};

/// Token used to fill the summary slot of the unassisted input.
pub const FILLER_TOKEN: &str = ".";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlancError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("`{0}` is not a BLANC configuration name")]
    BadName(String),
    #[error("{context}: {source}")]
    Backend {
        context: String,
        #[source]
        source: BackendError,
    },
    #[error("sentence {sentence}: {source}")]
    Tokenization {
        sentence: usize,
        #[source]
        source: TokenizationError,
    },
    #[error("sentence {sentence} needs {needed} tokens but the model accepts {max}")]
    SentenceTooLong {
        sentence: usize,
        needed: usize,
        max: usize,
    },
    #[error("no token of the document is eligible for masking")]
    Unmaskable,
}

fn backend_err(context: impl Into<String>) -> impl FnOnce(BackendError) -> BlancError {
    let context = context.into();
    move |source| BlancError::Backend { context, source }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlancConfig {
    pub model_id: String,
    /// Stride between masked positions within one pass.
    pub gap: usize,
    /// Minimum length of a whole-word token.
    pub l_normal: usize,
    /// Minimum length of the first piece of a split word.
    pub l_lead: usize,
    /// Minimum length of a continuation piece.
    pub l_follow: usize,
}

impl Default for BlancConfig {
    /// dbmdz cased model, gap 2, thresholds 4 / 2 / 1.
    fn default() -> Self {
        Self {
            model_id: RECOMMENDED_MODEL.to_string(),
            gap: 2,
            l_normal: 4,
            l_lead: 2,
            l_follow: 1,
        }
    }
}

impl BlancConfig {
    pub fn new(
        model_id: impl Into<String>,
        gap: usize,
        l_normal: usize,
        l_lead: usize,
        l_follow: usize,
    ) -> Result<Self, BlancError> {
        let cfg = Self {
            model_id: model_id.into(),
            gap,
            l_normal,
            l_lead,
            l_follow,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BlancError> {
        if self.model_id.is_empty() {
            return Err(BlancError::InvalidConfig("empty model id".into()));
        }
        for (name, v) in [
            ("gap", self.gap),
            ("l_normal", self.l_normal),
            ("l_lead", self.l_lead),
            ("l_follow", self.l_follow),
        ] {
            if v == 0 {
                return Err(BlancError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Report column name.
    ///
    /// The recommended model at gap 2 uses the short form `B_L4_Ll2_Lf1`;
    /// every other model or gap is qualified as
    /// `B_<model>_G<gap>_L<n>_Ll<l>_Lf<f>` so sweep columns stay unique.
    pub fn name(&self) -> String {
        let thresholds = format!("L{}_Ll{}_Lf{}", self.l_normal, self.l_lead, self.l_follow);
        if self.model_id == RECOMMENDED_MODEL && self.gap == 2 {
            format!("B_{thresholds}")
        } else {
            format!("B_{}_G{}_{thresholds}", self.model_id, self.gap)
        }
    }

    /// Inverse of [`Self::name`].
    pub fn from_name(name: &str) -> Result<Self, BlancError> {
        let bad = || BlancError::BadName(name.to_string());
        let body = name.strip_prefix("B_").ok_or_else(bad)?;
        let mut parts = body.rsplitn(4, '_');
        let lf = parts.next().and_then(|s| s.strip_prefix("Lf")).ok_or_else(bad)?;
        let ll = parts.next().and_then(|s| s.strip_prefix("Ll")).ok_or_else(bad)?;
        let ln = parts.next().and_then(|s| s.strip_prefix('L')).ok_or_else(bad)?;
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let (model_id, gap) = match parts.next() {
            None => (RECOMMENDED_MODEL.to_string(), 2),
            Some(prefix) => {
                let (model, gap) = prefix.rsplit_once("_G").ok_or_else(bad)?;
                (model.to_string(), num(gap)?)
            }
        };
        let cfg = Self::new(model_id, gap, num(ln)?, num(ll)?, num(lf)?).map_err(|_| bad())?;
        if cfg.name() == name {
            Ok(cfg)
        } else {
            Err(bad())
        }
    }

    /// Minimum effective length for a token of the given kind.
    pub fn threshold(&self, kind: TokenKind) -> usize {
        match kind {
            TokenKind::Normal => self.l_normal,
            TokenKind::Lead => self.l_lead,
            TokenKind::Follow => self.l_follow,
        }
    }
}

impl fmt::Display for BlancConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BlancConfig {
    type Err = BlancError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s)
    }
}

/// The positions masked together in one pass over a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingPlan {
    pub sentence_index: usize,
    pub offset: usize,
    pub masked_positions: Vec<usize>,
}

/// Pooled success/failure pair counts. In `sXY`, `X` is whether the
/// unassisted input recovered the token and `Y` whether the assisted one did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlancCounts {
    pub s00: u64,
    pub s01: u64,
    pub s10: u64,
    pub s11: u64,
}

impl BlancCounts {
    pub fn record(&mut self, unassisted_ok: bool, assisted_ok: bool) {
        match (unassisted_ok, assisted_ok) {
            (false, false) => self.s00 += 1,
            (false, true) => self.s01 += 1,
            (true, false) => self.s10 += 1,
            (true, true) => self.s11 += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.s00 + self.s01 + self.s10 + self.s11
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlancScore {
    pub counts: BlancCounts,
    pub n: u64,
    pub score: f64,
}

impl BlancScore {
    /// `None` when nothing was masked.
    pub fn from_counts(counts: BlancCounts) -> Option<Self> {
        let n = counts.total();
        (n > 0).then(|| Self {
            counts,
            n,
            score: (counts.s01 as f64 - counts.s10 as f64) / n as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlancOptions {
    /// Compare predictions case-insensitively for models whose descriptor
    /// declares an uncased tokenizer.
    pub fold_case_uncased: bool,
}

pub fn is_eligible(token: &SubToken, config: &BlancConfig) -> bool {
    token.effective_length >= config.threshold(token.kind)
}

/// One plan per offset in `0..gap`, each masking the eligible tokens at
/// positions congruent to the offset. Plans that would mask nothing are
/// omitted.
pub fn build_masking_plans(sentence: &SentenceTokens, config: &BlancConfig) -> Vec<MaskingPlan> {
    let gap = config.gap.max(1);
    (0..gap)
        .filter_map(|offset| {
            let masked_positions: Vec<usize> = sentence
                .tokens
                .iter()
                .enumerate()
                .skip(offset)
                .step_by(gap)
                .filter(|(_, t)| is_eligible(t, config))
                .map(|(p, _)| p)
                .collect();
            (!masked_positions.is_empty()).then_some(MaskingPlan {
                sentence_index: sentence.sentence_index,
                offset,
                masked_positions,
            })
        })
        .collect()
}

/// Builds the assisted and unassisted queries for one plan.
///
/// When the pair does not fit the model window the summary loses tokens
/// from its tail; the sentence is never cut.
pub fn assemble_pair(
    summary_tokens: &[String],
    sentence: &SentenceTokens,
    plan: &MaskingPlan,
    backend: &BackendDescriptor,
) -> Result<(MaskQuery, MaskQuery), BlancError> {
    let special = &backend.special_tokens;
    let sentence_len = sentence.tokens.len();
    let needed = sentence_len + 3;
    if needed > backend.max_sequence_length {
        return Err(BlancError::SentenceTooLong {
            sentence: sentence.sentence_index,
            needed,
            max: backend.max_sequence_length,
        });
    }
    let kept = summary_tokens
        .len()
        .min(backend.max_sequence_length - needed);
    let prefix = kept + 2;

    let mut body: Vec<String> = sentence
        .tokens
        .iter()
        .map(|t| t.raw(&backend.continuation_marker))
        .collect();
    for &p in &plan.masked_positions {
        body[p] = special.mask.clone();
    }

    let build = |lead: &mut dyn Iterator<Item = String>| {
        let mut tokens = Vec::with_capacity(prefix + sentence_len + 1);
        tokens.push(special.cls.clone());
        tokens.extend(lead);
        tokens.push(special.sep.clone());
        tokens.extend(body.iter().cloned());
        tokens.push(special.sep.clone());
        MaskQuery {
            tokens,
            mask_positions: plan.masked_positions.iter().map(|p| p + prefix).collect(),
            model_id: backend.model_id.clone(),
        }
    };
    let assisted = build(&mut summary_tokens[..kept].iter().cloned());
    let unassisted = build(&mut std::iter::repeat_n(FILLER_TOKEN.to_string(), kept));
    Ok((assisted, unassisted))
}

/// Tokenizes and classifies every sentence of `text`.
pub fn sentence_tokens(
    text: &str,
    descriptor: &BackendDescriptor,
    backend: &dyn MaskedLm,
) -> Result<Vec<SentenceTokens>, BlancError> {
    split_sentences(text)
        .iter()
        .enumerate()
        .map(|(sentence_index, s)| {
            let raw = backend
                .tokenize(s, &descriptor.model_id)
                .map_err(backend_err(format!("tokenizing sentence {sentence_index}")))?;
            let tokens = classify_tokens(&raw, &descriptor.continuation_marker).map_err(
                |source| BlancError::Tokenization {
                    sentence: sentence_index,
                    source,
                },
            )?;
            Ok(SentenceTokens {
                sentence_index,
                tokens,
            })
        })
        .filter(|r| !matches!(r, Ok(s) if s.tokens.is_empty()))
        .collect()
}

pub fn blanc_help(
    record: &CorpusRecord,
    config: &BlancConfig,
    backend: &dyn MaskedLm,
) -> Result<BlancScore, BlancError> {
    blanc_help_with(record, config, backend, BlancOptions::default())
}

pub fn blanc_help_with(
    record: &CorpusRecord,
    config: &BlancConfig,
    backend: &dyn MaskedLm,
    options: BlancOptions,
) -> Result<BlancScore, BlancError> {
    config.validate()?;
    let descriptor = backend
        .descriptor(&config.model_id)
        .map_err(backend_err("resolving model"))?;
    let summary = backend
        .tokenize(&record.summary, &config.model_id)
        .map_err(backend_err("tokenizing summary"))?;
    let sentences = sentence_tokens(&record.source, &descriptor, backend)?;

    let mut queries = Vec::new();
    let mut targets: Vec<Vec<&str>> = Vec::new();
    for sentence in &sentences {
        for plan in build_masking_plans(sentence, config) {
            let (assisted, unassisted) = assemble_pair(&summary, sentence, &plan, &descriptor)?;
            targets.push(
                plan.masked_positions
                    .iter()
                    .map(|&p| sentence.tokens[p].surface.as_str())
                    .collect(),
            );
            queries.push(assisted);
            queries.push(unassisted);
        }
    }
    if queries.is_empty() {
        return Err(BlancError::Unmaskable);
    }

    let fold = options.fold_case_uncased && descriptor.uncased;
    let marker = descriptor.continuation_marker.as_str();
    let matches = |predicted: &str, target: &str| {
        let predicted = predicted.strip_prefix(marker).unwrap_or(predicted);
        if fold {
            predicted.to_lowercase() == target.to_lowercase()
        } else {
            predicted == target
        }
    };

    let predictions = backend.batch(&queries);
    let mut counts = BlancCounts::default();
    for (plan_idx, expected) in targets.iter().enumerate() {
        let assisted = predictions[2 * plan_idx]
            .as_ref()
            .map_err(|e| backend_err(format!("assisted query {plan_idx}"))(e.clone()))?;
        let unassisted = predictions[2 * plan_idx + 1]
            .as_ref()
            .map_err(|e| backend_err(format!("unassisted query {plan_idx}"))(e.clone()))?;
        for (i, target) in expected.iter().enumerate() {
            counts.record(
                matches(&unassisted.predicted[i], target),
                matches(&assisted.predicted[i], target),
            );
        }
    }
    BlancScore::from_counts(counts).ok_or(BlancError::Unmaskable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FallbackRule, MockBackend};

    fn tok(surface: &str, kind: TokenKind) -> SubToken {
        SubToken {
            surface: surface.into(),
            kind,
            effective_length: surface.chars().count(),
            word_index: 0,
        }
    }

    fn sentence_of(n: usize, len: usize) -> SentenceTokens {
        SentenceTokens {
            sentence_index: 0,
            tokens: (0..n)
                .map(|i| SubToken {
                    surface: "x".repeat(len),
                    kind: TokenKind::Normal,
                    effective_length: len,
                    word_index: i,
                })
                .collect(),
        }
    }

    fn cfg(gap: usize, n: usize, l: usize, f: usize) -> BlancConfig {
        BlancConfig::new(RECOMMENDED_MODEL, gap, n, l, f).unwrap()
    }

    #[test]
    fn eligibility_boundaries() {
        let c = cfg(2, 4, 2, 100);
        assert!(is_eligible(&tok("Haus", TokenKind::Normal), &c));
        assert!(!is_eligible(&tok("Hau", TokenKind::Normal), &c));
        assert!(!is_eligible(&tok("fassung", TokenKind::Follow), &c));
        assert!(is_eligible(&tok("Zu", TokenKind::Lead), &c));
        assert!(!is_eligible(&tok("Z", TokenKind::Lead), &c));
        assert!(is_eligible(&tok("n", TokenKind::Follow), &cfg(2, 4, 2, 1)));
    }

    #[test]
    fn gap_three_plans() {
        let plans = build_masking_plans(&sentence_of(6, 5), &cfg(3, 4, 1, 1));
        let sets: Vec<_> = plans.iter().map(|p| p.masked_positions.clone()).collect();
        assert_eq!(sets, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
        assert_eq!(plans.iter().map(|p| p.offset).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn gap_one_and_nothing_eligible() {
        let plans = build_masking_plans(&sentence_of(4, 5), &cfg(1, 4, 1, 1));
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].masked_positions, [0, 1, 2, 3]);
        assert!(build_masking_plans(&sentence_of(4, 3), &cfg(2, 4, 1, 1)).is_empty());
    }

    #[test]
    fn empty_plans_dropped() {
        // only position 1 eligible, gap 2: offset 0 plan is dropped
        let mut s = sentence_of(3, 2);
        s.tokens[1].effective_length = 9;
        let plans = build_masking_plans(&s, &cfg(2, 4, 1, 1));
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].offset, 1);
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pair_layout_and_offsets() {
        let d = BackendDescriptor::bert(RECOMMENDED_MODEL, 8);
        let sentence = SentenceTokens {
            sentence_index: 0,
            tokens: classify_tokens(&["Das", "Zusammen", "##fassung", "gut"], "##").unwrap(),
        };
        let plan = MaskingPlan {
            sentence_index: 0,
            offset: 0,
            masked_positions: vec![2],
        };
        let (a, u) = assemble_pair(&strings(&["a", "b", "c"]), &sentence, &plan, &d).unwrap();
        assert_eq!(
            a.tokens,
            strings(&["[CLS]", "a", "b", "c", "[SEP]", "Das", "Zusammen", "[MASK]", "gut", "[SEP]"])
        );
        assert_eq!(
            u.tokens,
            strings(&["[CLS]", ".", ".", ".", "[SEP]", "Das", "Zusammen", "[MASK]", "gut", "[SEP]"])
        );
        // prefix length 5, sentence position 2
        assert_eq!(a.mask_positions, [7]);
        assert_eq!(u.mask_positions, [7]);
        assert_eq!(a.tokens[5..], u.tokens[5..]);
    }

    #[test]
    fn summary_tail_truncated_to_fit() {
        let mut d = BackendDescriptor::bert(RECOMMENDED_MODEL, 8);
        d.max_sequence_length = 16;
        let sentence = sentence_of(10, 5);
        let plan = MaskingPlan {
            sentence_index: 0,
            offset: 0,
            masked_positions: vec![0],
        };
        let summary: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let (a, u) = assemble_pair(&summary, &sentence, &plan, &d).unwrap();
        assert_eq!(a.tokens.len(), 16);
        assert_eq!(a.tokens[1..4], summary[..3]);
        assert_eq!(u.tokens.len(), 16);
        assert_eq!(a.mask_positions, [5]);

        let too_long = sentence_of(14, 5);
        assert!(matches!(
            assemble_pair(&summary, &too_long, &plan, &d),
            Err(BlancError::SentenceTooLong { needed: 17, max: 16, .. })
        ));
        // exactly fits with an empty summary slot
        let exact = sentence_of(13, 5);
        let (a, _) = assemble_pair(&summary, &exact, &plan, &d).unwrap();
        assert_eq!(a.tokens.len(), 16);
        assert_eq!(a.mask_positions, [2]);
    }

    fn record(summary: &str, source: &str) -> CorpusRecord {
        CorpusRecord {
            id: "r".into(),
            query: "q".into(),
            source: source.into(),
            summary: summary.into(),
            references: vec![],
            language: "de".into(),
        }
    }

    #[test]
    fn filler_summary_scores_zero() {
        let mock = MockBackend::new();
        let s = blanc_help(&record(". . .", "Der Router blinkt heute."), &cfg(2, 1, 1, 1), &mock)
            .unwrap();
        assert_eq!(s.counts.s01, s.counts.s10);
        assert_eq!(s.score, 0.0);
        assert_eq!(s.n, 5);
    }

    #[test]
    fn scripted_half() {
        // sentence "Netz Router": with gap 1 both are masked in one pass;
        // summary "s01" is 1 token, so the prefix is 3 and positions are 3, 4.
        let mock = MockBackend::new()
            .fallback(FallbackRule::Constant("Netz".into()))
            .answer("s01", 4, "Router");
        let s = blanc_help(&record("s01", "Netz Router"), &cfg(1, 4, 1, 1), &mock).unwrap();
        assert_eq!(
            s.counts,
            BlancCounts {
                s00: 0,
                s01: 1,
                s10: 0,
                s11: 1
            }
        );
        assert_eq!(s.n, 2);
        assert_eq!(s.score, 0.5);
    }

    #[test]
    fn scripted_extremes() {
        let mock = MockBackend::new()
            .fallback(FallbackRule::Constant("nix".into()))
            .answer("s01", 3, "Netz")
            .answer("s01", 4, "Router");
        let best = blanc_help(&record("s01", "Netz Router"), &cfg(1, 4, 1, 1), &mock).unwrap();
        assert_eq!(best.score, 1.0);

        let mock = MockBackend::new()
            .fallback(FallbackRule::Constant("Netz".into()))
            .answer("s01", 3, "nix")
            .answer("s01", 4, "nix");
        let worst = blanc_help(&record("s01", "Netz Netz"), &cfg(1, 4, 1, 1), &mock).unwrap();
        assert_eq!(worst.counts.s10, 2);
        assert_eq!(worst.score, -1.0);
    }

    #[test]
    fn unmaskable_document() {
        let mock = MockBackend::new();
        let err = blanc_help(&record("abc", "ja so da."), &cfg(2, 4, 2, 1), &mock).unwrap_err();
        assert_eq!(err, BlancError::Unmaskable);
    }

    #[test]
    fn unknown_model_propagates_with_context() {
        let mock = MockBackend::with_models(["other"]);
        let err = blanc_help(&record("a", "Netz Router"), &cfg(2, 4, 2, 1), &mock).unwrap_err();
        assert!(matches!(
            err,
            BlancError::Backend {
                source: BackendError::UnknownModel(_),
                ..
            }
        ));
    }

    #[test]
    fn case_folding_for_uncased_models() {
        let model = "bert-base-german-dbmdz-uncased";
        let mock = MockBackend::new()
            .fallback(FallbackRule::Constant("x".into()))
            .answer("s01", 3, "NETZ");
        let c = BlancConfig::new(model, 1, 4, 1, 1).unwrap();
        let strict = blanc_help(&record("s01", "Netz"), &c, &mock).unwrap();
        assert_eq!(strict.counts.s01, 0);
        let folded = blanc_help_with(
            &record("s01", "Netz"),
            &c,
            &mock,
            BlancOptions {
                fold_case_uncased: true,
            },
        )
        .unwrap();
        assert_eq!(folded.counts.s01, 1);
    }

    #[test]
    fn config_names() {
        assert_eq!(BlancConfig::default().name(), "B_L4_Ll2_Lf1");
        assert_eq!(
            BlancConfig::from_name("B_L4_Ll2_Lf100").unwrap(),
            cfg(2, 4, 2, 100)
        );
        let other = BlancConfig::new("bert-base-german-cased", 6, 5, 1, 100).unwrap();
        assert_eq!(other.name(), "B_bert-base-german-cased_G6_L5_Ll1_Lf100");
        assert_eq!(BlancConfig::from_name(&other.name()).unwrap(), other);
        for bad in ["BLEU", "B_L4_Ll2", "B_L0_Ll2_Lf1", "B_Lx_Ll2_Lf1", "B_m_L4_Ll2_Lf1"] {
            assert!(BlancConfig::from_name(bad).is_err(), "{bad}");
        }
        assert!(BlancConfig::new("m", 0, 1, 1, 1).is_err());
    }
}
