//! Content-addressed reply cache, persisted as JSON lines.
//!
//! A key hashes the snapshot fingerprint, stage, target, attempt, prompt
//! template version, model name and seed. Each record also stores a digest of
//! the prompt text; a hit whose prompt digest differs (the data under the
//! schema changed) is treated as a miss and overwritten by the new record.
//! Later lines in the file win over earlier ones.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DescriptionModel, ModelError, Prompt, SamplingParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub prompt_digest: String,
    pub reply: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    /// Calls forwarded to the wrapped model.
    pub misses: u64,
}

struct Store {
    entries: HashMap<String, CacheRecord>,
    writer: Option<File>,
}

pub struct CachedModel<M> {
    inner: M,
    fingerprint: String,
    template_version: String,
    path: Option<PathBuf>,
    store: Mutex<Store>,
    hits: AtomicU64,
    misses: AtomicU64,
}

fn sha_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

impl<M: DescriptionModel> CachedModel<M> {
    /// Cache held in memory only.
    pub fn in_memory(inner: M, fingerprint: impl Into<String>, template_version: impl Into<String>) -> Self {
        CachedModel {
            inner,
            fingerprint: fingerprint.into(),
            template_version: template_version.into(),
            path: None,
            store: Mutex::new(Store {
                entries: HashMap::new(),
                writer: None,
            }),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Loads `path` if it exists and appends new records to it.
    pub fn open(
        inner: M,
        path: &Path,
        fingerprint: impl Into<String>,
        template_version: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::Cache(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) => {
                        entries.insert(rec.key.clone(), rec);
                    }
                    Err(e) => log::warn!("skipping corrupt cache line {} in {}: {e}", n + 1, path.display()),
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let writer = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let mut cache = Self::in_memory(inner, fingerprint, template_version);
        cache.path = Some(path.to_path_buf());
        cache.store = Mutex::new(Store {
            entries,
            writer: Some(writer),
        });
        Ok(cache)
    }

    pub fn key_for(&self, prompt: &Prompt, params: &SamplingParams) -> String {
        sha_hex(&[
            &self.fingerprint,
            prompt.stage.as_str(),
            &prompt.target,
            prompt.attempt.as_str(),
            &self.template_version,
            self.inner.name(),
            &params.seed.to_string(),
        ])
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
        }
    }

    pub fn len(&self) -> usize {
        self.store.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: DescriptionModel> DescriptionModel for CachedModel<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        let key = self.key_for(prompt, params);
        let prompt_digest = sha_hex(&[&prompt.text]);
        {
            let store = self.store.lock().expect("cache lock");
            if let Some(rec) = store.entries.get(&key) {
                if rec.prompt_digest == prompt_digest {
                    self.hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(rec.reply.clone());
                }
            }
        }
        // The lock is not held across the model call so other targets proceed.
        self.misses.fetch_add(1, Ordering::SeqCst);
        let reply = self.inner.send(prompt, params)?;
        let rec = CacheRecord {
            key: key.clone(),
            prompt_digest,
            reply: reply.clone(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let mut store = self.store.lock().expect("cache lock");
        if let Some(writer) = store.writer.as_mut() {
            let line = serde_json::to_string(&rec).map_err(|e| ModelError::Cache(e.to_string()))?;
            writeln!(writer, "{line}")
                .and_then(|_| writer.flush())
                .map_err(|e| ModelError::Cache(e.to_string()))?;
        }
        store.entries.insert(key, rec);
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MockModel, Recording, Stage};

    fn prompt(text: &str) -> Prompt {
        Prompt::new(Stage::TableInfo, "orders", text)
    }

    #[test]
    fn second_identical_call_is_a_hit() {
        let cache = CachedModel::in_memory(Recording::new(MockModel::synthetic()), "fp", "v1");
        let params = SamplingParams::default();
        let a = cache.send(&prompt("x"), &params).unwrap();
        let b = cache.send(&prompt("x"), &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.stats(), CacheStats { hits: 1, misses: 1 });
        assert_eq!(cache.inner().call_count(), 1);
    }

    #[test]
    fn changed_prompt_text_or_seed_misses() {
        let cache = CachedModel::in_memory(MockModel::synthetic(), "fp", "v1");
        let params = SamplingParams::default();
        cache.send(&prompt("x"), &params).unwrap();
        cache.send(&prompt("y"), &params).unwrap();
        cache.send(&prompt("y"), &SamplingParams { seed: 9, ..params }).unwrap();
        assert_eq!(cache.stats().misses, 3);
    }

    #[test]
    fn persists_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("c.jsonl");
        let params = SamplingParams::default();
        let first = {
            let cache = CachedModel::open(MockModel::synthetic(), &path, "fp", "v1").unwrap();
            cache.send(&prompt("x"), &params).unwrap()
        };
        let text = std::fs::read_to_string(&path).unwrap();
        let rec: CacheRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec.reply, first);

        let warm = CachedModel::open(Recording::new(MockModel::synthetic()), &path, "fp", "v1").unwrap();
        assert_eq!(warm.send(&prompt("x"), &params).unwrap(), first);
        assert_eq!(warm.inner().call_count(), 0);

        let other_db = CachedModel::open(Recording::new(MockModel::synthetic()), &path, "fp2", "v1").unwrap();
        other_db.send(&prompt("x"), &params).unwrap();
        assert_eq!(other_db.inner().call_count(), 1);
    }

    #[test]
    fn corrupt_lines_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "not json\n\n").unwrap();
        let cache = CachedModel::open(MockModel::synthetic(), &path, "fp", "v1").unwrap();
        assert!(cache.is_empty());
    }

    #[test]
    fn errors_are_not_cached() {
        let model = MockModel::from_json(r#"{"replies": {"table_info": [{"error": "down"}, "up"]}}"#).unwrap();
        let cache = CachedModel::in_memory(model, "fp", "v1");
        let params = SamplingParams::default();
        assert!(cache.send(&prompt("x"), &params).is_err());
        assert_eq!(cache.send(&prompt("x"), &params).unwrap(), "up");
        assert_eq!(cache.len(), 1);
    }
}
