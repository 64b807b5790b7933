//! Content-addressed score cache stored as one JSON document.
//!
//! Keys are SHA-256 digests over the metric or configuration, the record id,
//! the record text and [`ALGORITHM_VERSION`], so changing any of them misses.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blanc::{BlancConfig, BlancCounts};
use crate::corpus::CorpusRecord;

/// Bump whenever a metric implementation changes its output.
pub const ALGORITHM_VERSION: &str = "blanc-eval/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub metric: String,
    pub record_id: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BlancCounts>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheFile {
    version: String,
    entries: BTreeMap<String, CacheEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cache {path} is not valid JSON: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Thread-safe cache; concurrent writers of distinct keys are fine and a
/// value inserted is visible to every later `get`.
#[derive(Debug, Default)]
pub struct ScoreCache {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<String, CacheEntry>>,
    dirty: AtomicBool,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path`, starting empty when the file does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let path = path.into();
        let entries = match std::fs::read(&path) {
            Ok(bytes) => {
                let file: CacheFile =
                    serde_json::from_slice(&bytes).map_err(|source| CacheError::Parse {
                        path: path.clone(),
                        source,
                    })?;
                file.entries
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            dirty: AtomicBool::new(false),
        })
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, entry: CacheEntry) {
        self.entries.write().expect("cache lock").insert(key, entry);
        self.dirty.store(true, Ordering::Release);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache through a temp file and rename. No-op when nothing
    /// changed or the cache is in-memory.
    pub fn save(&self) -> Result<(), CacheError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if !self.dirty.swap(false, Ordering::AcqRel) {
            return Ok(());
        }
        let file = CacheFile {
            version: ALGORITHM_VERSION.to_string(),
            entries: self.entries.read().expect("cache lock").clone(),
        };
        let bytes = serde_json::to_vec_pretty(&file).expect("cache entries serialize");
        write_atomic(path, &bytes).map_err(|source| CacheError::Io {
            path: path.clone(),
            source,
        })
    }
}

/// Replaces `path` with `bytes` so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    h.update(ALGORITHM_VERSION.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn record_text(record: &CorpusRecord) -> String {
    let mut parts = vec![record.summary.as_str(), record.source.as_str()];
    parts.extend(record.references.iter().map(String::as_str));
    digest(&parts)
}

pub fn blanc_key(config: &BlancConfig, record: &CorpusRecord) -> String {
    digest(&[
        "blanc",
        &config.model_id,
        &config.gap.to_string(),
        &config.l_normal.to_string(),
        &config.l_lead.to_string(),
        &config.l_follow.to_string(),
        &record.id,
        &record_text(record),
    ])
}

pub fn metric_key(metric: &str, record: &CorpusRecord) -> String {
    digest(&["metric", metric, &record.id, &record_text(record)])
}
