use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use blanc_core::backend::{
    BackendDescriptor, BackendError, FallbackRule, MaskPrediction, MaskQuery, MaskedLm,
    MockBackend, GERMAN_MODELS,
};
use blanc_core::blanc::RECOMMENDED_MODEL;
use blanc_core::tokenization::split_sentences;
use blanc_core::corpus::{load_corpus, Factor, RaterKind};
use blanc_core::ScoreMatrix;
use blanc_eval::{
    cmd_correlate_with, cmd_report, cmd_score_with, cmd_sweep_with, CliError, Outcome, RunConfig,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn config(out: &Path) -> RunConfig {
    RunConfig {
        corpus_path: Some(fixture("corpus.jsonl")),
        annotations_path: Some(fixture("annotations.jsonl")),
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn score_is_deterministic_across_worker_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mock = MockBackend::new();
    let one = RunConfig {
        workers: Some(1),
        ..config(a.path())
    };
    let four = RunConfig {
        workers: Some(4),
        ..config(b.path())
    };
    // references are missing for two records, which is not a failure
    assert_eq!(cmd_score_with(&one, &mock).unwrap(), Outcome::Success);
    assert_eq!(cmd_score_with(&four, &mock).unwrap(), Outcome::Success);
    let scores = read(a.path().join("scores.csv"));
    assert_eq!(scores, read(b.path().join("scores.csv")));
    assert_eq!(
        scores.lines().next().unwrap(),
        "id,BLEU,ROUGE-1,ROUGE-2,ROUGE-L,BERTScore-F,JS,B_L4_Ll2_Lf1"
    );
    assert_eq!(scores.lines().count(), 13);
    let missing = read(a.path().join("missing.csv"));
    assert!(missing.contains("t06,ROUGE-1,no reference summaries"));
}

#[test]
fn warm_cache_skips_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.json");
    let cold_cfg = RunConfig {
        cache_path: Some(cache.clone()),
        sweep: true,
        models: vec![GERMAN_MODELS[1].into()],
        ..config(&dir.path().join("cold"))
    };
    let cold = MockBackend::new();
    cmd_score_with(&cold_cfg, &cold).unwrap();
    assert!(cold.calls() > 0);

    let warm = MockBackend::new();
    let warm_cfg = RunConfig {
        output_dir: dir.path().join("warm"),
        ..cold_cfg.clone()
    };
    cmd_score_with(&warm_cfg, &warm).unwrap();
    assert_eq!(warm.calls(), 0);
    assert_eq!(
        read(dir.path().join("cold/scores.csv")),
        read(dir.path().join("warm/scores.csv"))
    );
}

#[test]
fn missing_corpus_is_fatal_and_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        corpus_path: Some(dir.path().join("nope.jsonl")),
        ..config(dir.path())
    };
    match cmd_score_with(&cfg, &MockBackend::new()) {
        Err(CliError::Input { path, .. }) => assert!(path.ends_with("nope.jsonl")),
        other => panic!("expected an input error, got {other:?}"),
    }
}

#[test]
fn binary_exit_codes_and_error_report() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_blanc-eval");
    let missing = dir.path().join("absent.jsonl");
    let out = Command::new(exe)
        .args(["score", "--corpus"])
        .arg(&missing)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "input");
    assert!(err["error"]["path"].as_str().unwrap().ends_with("absent.jsonl"));

    let ok = Command::new(exe)
        .args(["score", "--metrics", "ROUGE-L,JS", "--corpus"])
        .arg(fixture("corpus.jsonl"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    // a model the backend does not serve fails cells, not the run
    let partial = Command::new(exe)
        .args(["score", "--metrics", "B_nobody_G2_L4_Ll2_Lf1", "--corpus"])
        .arg(fixture("corpus.jsonl"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(partial.status.code(), Some(1));

    let bad_flag = Command::new(exe)
        .args(["score", "--alpha", "2"])
        .output()
        .unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(
        &file,
        format!(
            "corpus = {:?}\nmetrics = \"ROUGE-1\"\nout = {:?}\n",
            fixture("corpus.jsonl"),
            dir.path().join("from_file")
        ),
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_blanc-eval"))
        .arg("score")
        .arg("--config")
        .arg(&file)
        .arg("--out")
        .arg(dir.path().join("from_flag"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let header = read(dir.path().join("from_flag/scores.csv"));
    assert_eq!(header.lines().next().unwrap(), "id,ROUGE-1");
    assert!(!dir.path().join("from_file").exists());
}

/// Writes annotations whose crowd MOS for one factor equals `values`
/// exactly: ten raters per summary, each giving an integer.
fn planted_annotations(path: &Path, factor: Factor, values: &BTreeMap<String, f64>) {
    let mut lines = String::new();
    for (id, &v) in values {
        let tenths = (v * 10.0).round() as i64;
        assert!((10..=50).contains(&tenths));
        // ratings r_k with sum == tenths over ten raters
        let base = tenths / 10;
        let extra = tenths % 10;
        for k in 0..10 {
            let r = base + i64::from(k < extra);
            lines.push_str(&format!(
                "{{\"summary_id\":\"{id}\",\"rater_id\":\"c{k}\",\"rater_kind\":\"crowd\",\"factors\":{{\"{factor}\":{r}}}}}\n"
            ));
        }
    }
    std::fs::write(path, lines).unwrap();
}

#[test]
fn planted_metric_correlates_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (1..=12).map(|i| format!("t{i:02}")).collect();
    let mos: BTreeMap<String, f64> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), 1.0 + ((i * 7) % 12) as f64 * 0.3))
        .collect();
    let annotations = dir.path().join("ann.jsonl");
    planted_annotations(&annotations, Factor::SummaryInformativeness, &mos);

    let mut m = ScoreMatrix::with_rows(ids.iter().cloned());
    m.add_column("PLANTED");
    m.add_column("SPARSE");
    for (i, (id, v)) in mos.iter().enumerate() {
        m.set("PLANTED", id, blanc_core::Cell::Value(v.powi(3) - 7.0));
        if i < 2 {
            m.set("SPARSE", id, blanc_core::Cell::Value(i as f64));
        }
    }
    let scores = dir.path().join("planted.csv");
    m.write_csv_file(&scores).unwrap();

    let cfg = RunConfig {
        annotations_path: Some(annotations),
        scores_path: Some(scores),
        ..config(&dir.path().join("out"))
    };
    assert_eq!(cmd_correlate_with(&cfg).unwrap(), Outcome::Success);
    let report = read(dir.path().join("out/report.csv"));
    let row = report
        .lines()
        .find(|l| l.starts_with("PLANTED,summary_informativeness,crowd"))
        .unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[3], "1");
    assert_eq!(fields[5], "true");
    // fewer than three overlapping ids: omitted with a reason
    assert!(!report.contains("SPARSE"));
    let skipped = read(dir.path().join("out/skipped.csv"));
    assert!(skipped.contains("SPARSE,summary_informativeness,crowd,only 2 overlapping summaries"));
    let bars = read(dir.path().join("out/bars/bars_crowd_summary_informativeness.csv"));
    assert_eq!(bars, "metric,rho,significant,marker\nPLANTED,1,true,\n");
    // mean-split sub-reports, one per criterion and group
    for c in ["source_length", "summary_length", "compression"] {
        for g in ["low", "high"] {
            assert!(dir.path().join(format!("out/splits/{c}_{g}.csv")).exists());
        }
    }
    assert!(read(dir.path().join("out/normality.csv")).starts_with("sample,n,a2,a2_star"));
}

#[test]
fn non_significant_correlations_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    cmd_score_with(&config(&out), &MockBackend::new()).unwrap();
    cmd_correlate_with(&config(&out)).unwrap();
    let mut marked = 0;
    for kind in RaterKind::ALL {
        for factor in Factor::ALL {
            let bars = read(out.join(format!("bars/bars_{kind}_{factor}.csv")));
            for line in bars.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                assert_eq!(f[3] == "*", f[2] == "false", "{line}");
                marked += usize::from(f[3] == "*");
            }
        }
    }
    assert!(marked > 0);
    cmd_report(&config(&out)).unwrap();
    let md = read(out.join("report.md"));
    assert!(md.contains("## crowd: summary_informativeness"));
    assert!(md.contains("Normality"));
}

/// Answers a random subset of masked source tokens correctly, but only
/// when a summary-only token is visible, so assisted inputs gain.
fn scripted_sweep_mock(seed: u64, model: &str) -> MockBackend {
    let pieces = [
        "Rou", "ter", "Rech", "nung", "Tech", "niker", "Glas", "faser", "Pass", "wort",
        "Daten", "volumen", "Neu", "start", "Anschl", "uss",
    ];
    let plain = MockBackend::new().vocab(pieces);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mock = MockBackend::new().vocab(pieces);
    for r in load_corpus(fixture("corpus.jsonl")).unwrap() {
        let summary = plain.tokenize(&r.summary, model).unwrap();
        let source = plain.tokenize(&r.source, model).unwrap();
        let Some(case) = summary.iter().find(|t| !source.contains(t)) else {
            continue;
        };
        let hit_rate = rng.random_range(0.1..0.9);
        for sentence in split_sentences(&r.source) {
            for (p, t) in plain.tokenize(&sentence, model).unwrap().iter().enumerate() {
                if rng.random_range(0.0..1.0) < hit_rate {
                    mock = mock.answer(case, summary.len() + 2 + p, t);
                }
            }
        }
    }
    mock
}

/// Sends fill-mask queries for one model to `scripted`, all others to a
/// model that never recovers anything.
struct OneModel {
    model: String,
    scripted: MockBackend,
    idle: MockBackend,
}

impl OneModel {
    fn pick(&self, model: &str) -> &MockBackend {
        if model == self.model {
            &self.scripted
        } else {
            &self.idle
        }
    }
}

impl MaskedLm for OneModel {
    fn descriptor(&self, model_id: &str) -> Result<BackendDescriptor, BackendError> {
        self.pick(model_id).descriptor(model_id)
    }
    fn predict_masked(&self, query: &MaskQuery) -> Result<MaskPrediction, BackendError> {
        self.pick(&query.model_id).predict_masked(query)
    }
    fn tokenize(&self, text: &str, model_id: &str) -> Result<Vec<String>, BackendError> {
        self.pick(model_id).tokenize(text, model_id)
    }
    fn embed_tokens(&self, text: &str, model_id: &str) -> Result<Vec<Vec<f64>>, BackendError> {
        self.pick(model_id).embed_tokens(text, model_id)
    }
}

#[test]
fn sweep_covers_the_grid_and_ranks_the_planted_config_first() {
    let dir = tempfile::tempdir().unwrap();
    let model = RECOMMENDED_MODEL;
    let mock = OneModel {
        model: model.into(),
        scripted: scripted_sweep_mock(11, model),
        idle: MockBackend::new().fallback(FallbackRule::Constant("?".into())),
    };
    let first = RunConfig {
        annotations_path: None,
        ..config(&dir.path().join("raw"))
    };
    assert_eq!(cmd_sweep_with(&first, &mock).unwrap(), Outcome::Success);
    let sweep = ScoreMatrix::read_csv_file(dir.path().join("raw/sweep_scores.csv")).unwrap();
    assert_eq!(sweep.columns().len(), 72);

    // plant judgements that follow one configuration exactly
    let target = "B_L5_Ll1_Lf1";
    let scores = sweep.column_values(target);
    let mut order: Vec<(&String, &f64)> = scores.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(b.1));
    let mut mos = BTreeMap::new();
    let mut level = 1.0;
    for (i, (id, v)) in order.iter().enumerate() {
        if i > 0 && *order[i - 1].1 != **v {
            level += 0.3;
        }
        mos.insert((*id).clone(), level);
    }
    let annotations = dir.path().join("planted.jsonl");
    planted_annotations(&annotations, Factor::Overall, &mos);

    let cfg = RunConfig {
        annotations_path: Some(annotations),
        top_k: 5,
        ..config(&dir.path().join("ranked"))
    };
    cmd_sweep_with(&cfg, &mock).unwrap();
    let ranking = read(dir.path().join("ranked/ranking.csv"));
    let rows: Vec<Vec<&str>> = ranking.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][..5], ["overall", "crowd", "1", target, "1"]);
    // anything tied with the planted configuration scores identically on
    // this corpus; everything else correlates less
    let report = read(dir.path().join("ranked/sweep_report.csv"));
    let mut below = 0;
    for line in report.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[3] == "1" {
            assert_eq!(sweep.column_values(f[0]), scores, "{}", f[0]);
        } else {
            below += 1;
        }
    }
    assert!(below >= 12, "{report}");
    // the idle models score 0 everywhere, which leaves nothing to rank
    let skipped = read(dir.path().join("ranked/sweep_skipped.csv"));
    assert_eq!(skipped.matches("input is constant").count(), 48);
}

#[test]
fn failed_sweep_cells_give_a_partial_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        models: vec![GERMAN_MODELS[0].into(), "unknown-model".into()],
        annotations_path: None,
        ..config(dir.path())
    };
    let outcome = cmd_sweep_with(&cfg, &MockBackend::new()).unwrap();
    assert_eq!(outcome, Outcome::Partial { failed_cells: 24 * 12 });
    let sweep = ScoreMatrix::read_csv_file(dir.path().join("sweep_scores.csv")).unwrap();
    assert_eq!(sweep.columns().len(), 48);
    assert!(read(dir.path().join("sweep_missing.csv")).contains("unknown model"));
}
