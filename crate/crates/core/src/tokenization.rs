//! Sentence splitting and subword token classification.
//!
//! The language model's tokenizer decides how words are split; this module
//! only labels each piece as a whole word, the first piece of a split word,
//! or a continuation piece, and measures its visible length.

use serde::{Deserialize, Serialize};

pub const DEFAULT_CONTINUATION_MARKER: &str = "##";

/// Abbreviations that end in a period without ending the sentence.
pub const GERMAN_ABBREVIATIONS: &[&str] = &["z.b.", "ca.", "bzw.", "dr.", "nr.", "usw."];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizationError {
    #[error("token {index} is a continuation piece with no preceding word start")]
    LeadingContinuation { index: usize },
    #[error("token {index} has an empty surface")]
    EmptyToken { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    /// The only piece of its word.
    Normal,
    /// First piece of a word split into two or more pieces.
    Lead,
    /// Any later piece of a split word.
    Follow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubToken {
    /// Surface with the continuation marker stripped.
    pub surface: String,
    pub kind: TokenKind,
    /// Character count of `surface`.
    pub effective_length: usize,
    pub word_index: usize,
}

impl SubToken {
    /// The token as the model tokenizer emitted it.
    pub fn raw(&self, marker: &str) -> String {
        match self.kind {
            TokenKind::Follow => format!("{marker}{}", self.surface),
            TokenKind::Normal | TokenKind::Lead => self.surface.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTokens {
    pub sentence_index: usize,
    pub tokens: Vec<SubToken>,
}

/// Labels raw tokenizer output. Pieces starting with `marker` continue the
/// previous word.
pub fn classify_tokens<S: AsRef<str>>(
    raw_tokens: &[S],
    marker: &str,
) -> Result<Vec<SubToken>, TokenizationError> {
    let is_follow = |t: &str| !marker.is_empty() && t.starts_with(marker);
    let mut out = Vec::with_capacity(raw_tokens.len());
    let mut word_index = 0usize;
    for (index, raw) in raw_tokens.iter().enumerate() {
        let raw = raw.as_ref();
        let follow = is_follow(raw);
        let surface = if follow { &raw[marker.len()..] } else { raw };
        if surface.is_empty() {
            return Err(TokenizationError::EmptyToken { index });
        }
        let kind = if follow {
            if index == 0 {
                return Err(TokenizationError::LeadingContinuation { index });
            }
            TokenKind::Follow
        } else {
            if index > 0 {
                word_index += 1;
            }
            match raw_tokens.get(index + 1) {
                Some(next) if is_follow(next.as_ref()) => TokenKind::Lead,
                _ => TokenKind::Normal,
            }
        };
        out.push(SubToken {
            surface: surface.to_string(),
            kind,
            effective_length: surface.chars().count(),
            word_index,
        });
    }
    Ok(out)
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '»' | '«' | '“' | '”' | '’')
}

/// Splits on `.`, `!` or `?` followed by a line break, or by whitespace and
/// an uppercase letter. A period closing one of [`GERMAN_ABBREVIATIONS`]
/// never splits. Returned sentences are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && (is_terminal(chars[j + 1].1) || is_closing(chars[j + 1].1)) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |&(b, _)| b);
        let mut k = j + 1;
        let mut newline = false;
        while k < chars.len() && chars[k].1.is_whitespace() {
            newline |= chars[k].1 == '\n';
            k += 1;
        }
        let boundary = if k == j + 1 {
            false
        } else if newline {
            true
        } else {
            k < chars.len() && chars[k].1.is_uppercase()
        };
        if boundary && !(c == '.' && j == i && ends_with_abbreviation(&text[start..end])) {
            push_trimmed(&mut sentences, &text[start..end]);
            start = end;
        }
        i = j + 1;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let last = segment
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_start_matches(['(', '"', '„', '»'])
        .to_lowercase();
    GERMAN_ABBREVIATIONS.contains(&last.as_str())
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}
