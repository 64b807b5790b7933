//! Evaluation items, human annotations and MOS aggregation.
//!
//! Both input files are JSONL (one object per line). Text fields are
//! NFC-normalized on load so that word counts and token surfaces do not
//! depend on how the source editor encoded umlauts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}` must not be empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown factor `{factor}`")]
    UnknownFactor { line: usize, factor: String },
    #[error("line {line}: score {score} for `{factor}` is outside 1..=5")]
    ScoreOutOfRange {
        line: usize,
        factor: String,
        score: i64,
    },
    #[error("line {line}: score for `{factor}` is not an integer")]
    NonIntegerScore { line: usize, factor: String },
    #[error("line {line}: unknown rater kind `{kind}`")]
    UnknownRaterKind { line: usize, kind: String },
}

/// One evaluation item: a query, the forum post it was asked against, the
/// candidate summary and zero or more gold summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub query: String,
    pub source: String,
    pub summary: String,
    #[serde(default)]
    pub references: Vec<String>,
    pub language: String,
}

impl CorpusRecord {
    pub fn source_words(&self) -> usize {
        word_count(&self.source)
    }

    pub fn summary_words(&self) -> usize {
        word_count(&self.summary)
    }

    /// Summary length divided by source length, both in words.
    pub fn compression(&self) -> f64 {
        let src = self.source_words();
        if src == 0 {
            0.0
        } else {
            self.summary_words() as f64 / src as f64
        }
    }
}

/// Whitespace-token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaterKind {
    Expert,
    Crowd,
}

impl RaterKind {
    pub const ALL: [RaterKind; 2] = [RaterKind::Expert, RaterKind::Crowd];

    pub fn as_str(self) -> &'static str {
        match self {
            RaterKind::Expert => "expert",
            RaterKind::Crowd => "crowd",
        }
    }
}

impl fmt::Display for RaterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RaterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert" => Ok(RaterKind::Expert),
            "crowd" => Ok(RaterKind::Crowd),
            other => Err(other.to_string()),
        }
    }
}

/// The nine annotated quality factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Overall,
    Grammaticality,
    NonRedundancy,
    ReferentialClarity,
    Focus,
    StructureCoherence,
    SummaryUsefulness,
    PostUsefulness,
    SummaryInformativeness,
}

impl Factor {
    pub const ALL: [Factor; 9] = [
        Factor::Overall,
        Factor::Grammaticality,
        Factor::NonRedundancy,
        Factor::ReferentialClarity,
        Factor::Focus,
        Factor::StructureCoherence,
        Factor::SummaryUsefulness,
        Factor::PostUsefulness,
        Factor::SummaryInformativeness,
    ];

    /// Factors judged with access to query and source (SU, PU, SI).
    pub const EXTRINSIC: [Factor; 3] = [
        Factor::SummaryUsefulness,
        Factor::PostUsefulness,
        Factor::SummaryInformativeness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Overall => "overall",
            Factor::Grammaticality => "grammaticality",
            Factor::NonRedundancy => "non_redundancy",
            Factor::ReferentialClarity => "referential_clarity",
            Factor::Focus => "focus",
            Factor::StructureCoherence => "structure_coherence",
            Factor::SummaryUsefulness => "summary_usefulness",
            Factor::PostUsefulness => "post_usefulness",
            Factor::SummaryInformativeness => "summary_informativeness",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Factor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Factor::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One rater's scores for one summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub summary_id: String,
    pub rater_id: String,
    pub rater_kind: RaterKind,
    pub factors: BTreeMap<Factor, u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

/// Per-summary aggregated opinion scores for one factor and rater group.
#[derive(Debug, Clone, PartialEq)]
pub struct MosTable {
    pub factor: Factor,
    pub rater_kind: RaterKind,
    pub values: BTreeMap<String, f64>,
}

impl MosTable {
    /// Column label used in reports, e.g. `crowd:summary_informativeness`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.rater_kind, self.factor)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// Iterates non-blank lines as `(1-based line number, parsed JSON object)`.
fn json_lines(
    path: &Path,
) -> Result<Vec<(usize, serde_json::Map<String, serde_json::Value>)>, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(map)) => out.push((lineno, map)),
            Ok(_) => {
                return Err(CorpusError::Malformed {
                    line: lineno,
                    message: "expected a JSON object".into(),
                })
            }
            Err(e) => {
                return Err(CorpusError::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn string_field(
    obj: &serde_json::Map<String, serde_json::Value>,
    line: usize,
    field: &'static str,
) -> Result<String, CorpusError> {
    match obj.get(field) {
        None | Some(serde_json::Value::Null) => Err(CorpusError::MissingField { line, field }),
        Some(serde_json::Value::String(s)) => Ok(nfc(s)),
        Some(_) => Err(CorpusError::Malformed {
            line,
            message: format!("field `{field}` must be a string"),
        }),
    }
}

fn record_from_json(
    obj: &serde_json::Map<String, serde_json::Value>,
    line: usize,
) -> Result<CorpusRecord, CorpusError> {
    let id = string_field(obj, line, "id")?;
    let query = string_field(obj, line, "query")?;
    let source = string_field(obj, line, "source")?;
    let summary = string_field(obj, line, "summary")?;
    let language = string_field(obj, line, "language")?;
    let references = match obj.get("references") {
        None | Some(serde_json::Value::Null) => {
            return Err(CorpusError::MissingField {
                line,
                field: "references",
            })
        }
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str().map(nfc).ok_or_else(|| CorpusError::Malformed {
                    line,
                    message: "`references` must be an array of strings".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => {
            return Err(CorpusError::Malformed {
                line,
                message: "`references` must be an array".into(),
            })
        }
    };
    for (field, value) in [("id", &id), ("source", &source), ("summary", &summary)] {
        if value.trim().is_empty() {
            return Err(CorpusError::EmptyField { line, field });
        }
    }
    Ok(CorpusRecord {
        id,
        query,
        source,
        summary,
        references,
        language,
    })
}

/// Loads a JSONL corpus, validating every record and id uniqueness.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (line, obj) in json_lines(path.as_ref())? {
        let record = record_from_json(&obj, line)?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records back as JSONL in the same field layout `load_corpus` reads.
pub fn write_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn annotation_from_json(
    obj: &serde_json::Map<String, serde_json::Value>,
    line: usize,
) -> Result<AnnotationRecord, CorpusError> {
    let summary_id = string_field(obj, line, "summary_id")?;
    let rater_id = string_field(obj, line, "rater_id")?;
    let kind = string_field(obj, line, "rater_kind")?;
    let rater_kind = kind
        .parse()
        .map_err(|kind| CorpusError::UnknownRaterKind { line, kind })?;
    let raw = match obj.get("factors") {
        None | Some(serde_json::Value::Null) => {
            return Err(CorpusError::MissingField {
                line,
                field: "factors",
            })
        }
        Some(serde_json::Value::Object(map)) => map,
        Some(_) => {
            return Err(CorpusError::Malformed {
                line,
                message: "`factors` must be an object".into(),
            })
        }
    };
    let mut factors = BTreeMap::new();
    for (name, value) in raw {
        let factor: Factor = name
            .parse()
            .map_err(|factor| CorpusError::UnknownFactor { line, factor })?;
        let score = value.as_i64().ok_or_else(|| CorpusError::NonIntegerScore {
            line,
            factor: name.clone(),
        })?;
        if !(1..=5).contains(&score) {
            return Err(CorpusError::ScoreOutOfRange {
                line,
                factor: name.clone(),
                score,
            });
        }
        factors.insert(factor, score as u8);
    }
    Ok(AnnotationRecord {
        summary_id,
        rater_id,
        rater_kind,
        factors,
    })
}

/// Loads a JSONL annotation file. Summary ids are not checked against any
/// corpus here; that happens when tables are joined with scores.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, CorpusError> {
    json_lines(path.as_ref())?
        .into_iter()
        .map(|(line, obj)| annotation_from_json(&obj, line))
        .collect()
}

/// Arithmetic-mean MOS for one factor and rater group.
pub fn aggregate_mos(
    annotations: &[AnnotationRecord],
    factor: Factor,
    rater_kind: RaterKind,
) -> MosTable {
    aggregate_mos_with(annotations, factor, rater_kind, Aggregation::Mean)
}

pub fn aggregate_mos_with(
    annotations: &[AnnotationRecord],
    factor: Factor,
    rater_kind: RaterKind,
    aggregation: Aggregation,
) -> MosTable {
    let mut raw: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| a.rater_kind == rater_kind) {
        if let Some(&score) = a.factors.get(&factor) {
            raw.entry(a.summary_id.as_str()).or_default().push(score);
        }
    }
    let values = raw
        .into_iter()
        .map(|(id, mut scores)| {
            let value = match aggregation {
                // integer sum keeps the mean independent of input order
                Aggregation::Mean => {
                    scores.iter().map(|&s| u64::from(s)).sum::<u64>() as f64 / scores.len() as f64
                }
                Aggregation::Median => {
                    scores.sort_unstable();
                    let mid = scores.len() / 2;
                    if scores.len() % 2 == 1 {
                        f64::from(scores[mid])
                    } else {
                        (f64::from(scores[mid - 1]) + f64::from(scores[mid])) / 2.0
                    }
                }
            };
            (id.to_string(), value)
        })
        .collect();
    MosTable {
        factor,
        rater_kind,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const REC1: &str = r#"{"id":"s01","query":"Router","source":"Der Router blinkt.","summary":"Router blinkt.","references":["Der Router blinkt rot."],"language":"de"}"#;
    const REC2: &str = r#"{"id":"s02","query":"Vertrag","source":"Ich will kündigen.","summary":"Kündigung.","references":[],"language":"de"}"#;

    #[test]
    fn loads_records_in_file_order() {
        let f = write_tmp(&[REC1, REC2]);
        let recs = load_corpus(f.path()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "s01");
        assert_eq!(recs[1].id, "s02");
        assert!(recs[1].references.is_empty());
    }

    #[test]
    fn empty_summary_names_field_and_line() {
        let bad = REC2.replace(r#""summary":"Kündigung.""#, r#""summary":"   ""#);
        let f = write_tmp(&[REC1, &bad]);
        let err = load_corpus(f.path()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::EmptyField {
                line: 2,
                field: "summary"
            }
        ));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn duplicate_id_rejected() {
        let f = write_tmp(&[REC1, REC1]);
        assert!(matches!(
            load_corpus(f.path()),
            Err(CorpusError::DuplicateId { line: 2, ref id }) if id == "s01"
        ));
    }

    #[test]
    fn missing_field_and_malformed_line() {
        let f = write_tmp(&[r#"{"id":"x","query":"q","summary":"s","references":[],"language":"de"}"#]);
        assert!(matches!(
            load_corpus(f.path()),
            Err(CorpusError::MissingField {
                line: 1,
                field: "source"
            })
        ));
        let f = write_tmp(&[REC1, "{not json"]);
        assert!(matches!(
            load_corpus(f.path()),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus("/nonexistent/corpus.jsonl").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus.jsonl"));
    }

    #[test]
    fn nfc_applied_on_load() {
        // "u" followed by U+0308 COMBINING DIAERESIS
        let rec = r#"{"id":"n","query":"q","source":"Gru\u0308n ist gut.","summary":"gruen","references":[],"language":"de"}"#;
        let f = write_tmp(&[rec]);
        let recs = load_corpus(f.path()).unwrap();
        assert_eq!(recs[0].source, "Gr\u{fc}n ist gut.");
    }

    fn annotation_line(factors: &str) -> String {
        format!(r#"{{"summary_id":"s01","rater_id":"r1","rater_kind":"crowd","factors":{factors}}}"#)
    }

    #[test]
    fn all_nine_factors_accepted() {
        let factors = Factor::ALL
            .iter()
            .map(|f| format!("\"{f}\":3"))
            .collect::<Vec<_>>()
            .join(",");
        let f = write_tmp(&[&annotation_line(&format!("{{{factors}}}"))]);
        let anns = load_annotations(f.path()).unwrap();
        assert_eq!(anns[0].factors.len(), 9);
        assert!(anns[0].factors.values().all(|&s| s == 3));
    }

    #[test]
    fn score_range_and_unknown_factor() {
        let f = write_tmp(&[&annotation_line(r#"{"focus":0}"#)]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::ScoreOutOfRange { score: 0, .. })
        ));
        let f = write_tmp(&[&annotation_line(r#"{"focus":6}"#)]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::ScoreOutOfRange { score: 6, .. })
        ));
        let f = write_tmp(&[&annotation_line(r#"{"fluency":3}"#)]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::UnknownFactor { ref factor, .. }) if factor == "fluency"
        ));
        let f = write_tmp(&[&annotation_line(r#"{"focus":2.5}"#)]);
        assert!(matches!(
            load_annotations(f.path()),
            Err(CorpusError::NonIntegerScore { .. })
        ));
    }

    fn ann(id: &str, kind: RaterKind, score: u8) -> AnnotationRecord {
        AnnotationRecord {
            summary_id: id.into(),
            rater_id: format!("r{score}"),
            rater_kind: kind,
            factors: BTreeMap::from([(Factor::SummaryInformativeness, score)]),
        }
    }

    #[test]
    fn mos_is_mean_of_matching_scores() {
        let si = Factor::SummaryInformativeness;
        let anns = vec![
            ann("s01", RaterKind::Crowd, 5),
            ann("s01", RaterKind::Crowd, 5),
            ann("s01", RaterKind::Crowd, 5),
            ann("s02", RaterKind::Crowd, 3),
            ann("s02", RaterKind::Crowd, 4),
            ann("s02", RaterKind::Expert, 1),
        ];
        let t = aggregate_mos(&anns, si, RaterKind::Crowd);
        assert_eq!(t.values["s01"], 5.0);
        assert_eq!(t.values["s02"], 3.5);
        let e = aggregate_mos(&anns, si, RaterKind::Expert);
        assert_eq!(e.values.len(), 1);
        assert_eq!(e.values["s02"], 1.0);
        assert!(aggregate_mos(&[], si, RaterKind::Crowd).values.is_empty());
        assert!(aggregate_mos(&anns, Factor::Focus, RaterKind::Crowd)
            .values
            .is_empty());
    }

    #[test]
    fn median_behind_flag() {
        let si = Factor::SummaryInformativeness;
        let anns: Vec<_> = [1, 2, 5, 5]
            .iter()
            .map(|&s| ann("s01", RaterKind::Crowd, s))
            .collect();
        let t = aggregate_mos_with(&anns, si, RaterKind::Crowd, Aggregation::Median);
        assert_eq!(t.values["s01"], 3.5);
    }

    #[test]
    fn compression_is_summary_over_source_words() {
        let r = CorpusRecord {
            id: "a".into(),
            query: "q".into(),
            source: "eins zwei drei vier".into(),
            summary: "eins".into(),
            references: vec![],
            language: "de".into(),
        };
        assert_eq!(r.compression(), 0.25);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_annotations() -> impl Strategy<Value = Vec<AnnotationRecord>> {
            prop::collection::vec(
                (0..4usize, any::<bool>(), 1u8..=5),
                0..40,
            )
            .prop_map(|v| {
                v.into_iter()
                    .map(|(id, expert, s)| {
                        let kind = if expert { RaterKind::Expert } else { RaterKind::Crowd };
                        ann(&format!("s{id}"), kind, s)
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn mos_permutation_invariant_and_bounded(
                anns in arb_annotations(),
                seed in any::<u64>(),
            ) {
                let si = Factor::SummaryInformativeness;
                let base = aggregate_mos(&anns, si, RaterKind::Crowd);
                let mut shuffled = anns.clone();
                // deterministic rotation + reversal stand in for a shuffle
                if !shuffled.is_empty() {
                    let k = (seed as usize) % shuffled.len();
                    shuffled.rotate_left(k);
                    if seed % 2 == 0 { shuffled.reverse(); }
                }
                prop_assert_eq!(&base, &aggregate_mos(&shuffled, si, RaterKind::Crowd));
                for (id, v) in &base.values {
                    let raw: Vec<u8> = anns.iter()
                        .filter(|a| &a.summary_id == id && a.rater_kind == RaterKind::Crowd)
                        .map(|a| a.factors[&si]).collect();
                    let lo = f64::from(*raw.iter().min().unwrap());
                    let hi = f64::from(*raw.iter().max().unwrap());
                    prop_assert!(lo <= *v && *v <= hi);
                }
            }

            #[test]
            fn corpus_roundtrip(
                texts in prop::collection::vec(("[a-zäöü]{1,8}", "[A-Za-zß ]{0,20}[a-z]"), 1..6)
            ) {
                let records: Vec<CorpusRecord> = texts.iter().enumerate().map(|(i, (s, src))| CorpusRecord {
                    id: format!("id{i}"),
                    query: "q".into(),
                    source: src.clone(),
                    summary: s.clone(),
                    references: vec![s.clone()],
                    language: "de".into(),
                }).collect();
                let f = tempfile::NamedTempFile::new().unwrap();
                write_corpus(f.path(), &records).unwrap();
                let first = load_corpus(f.path()).unwrap();
                write_corpus(f.path(), &first).unwrap();
                prop_assert_eq!(&first, &load_corpus(f.path()).unwrap());
                prop_assert_eq!(first, records);
            }
        }
    }
}
