use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::PromptDigest;

/// Identity of one completion: the same key always maps to the same response.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub model_name: String,
    pub prompt_digest: PromptDigest,
    temperature_bits: u64,
    pub sample_index: u32,
}

impl CacheKey {
    pub fn new(
        model_name: impl Into<String>,
        prompt_digest: PromptDigest,
        temperature: f64,
        sample_index: u32,
    ) -> Self {
        // -0.0 and 0.0 are the same request
        let temperature = if temperature == 0.0 { 0.0 } else { temperature };
        CacheKey {
            model_name: model_name.into(),
            prompt_digest,
            temperature_bits: temperature.to_bits(),
            sample_index,
        }
    }

    pub fn temperature(&self) -> f64 {
        f64::from_bits(self.temperature_bits)
    }
}

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model: String,
    pub prompt_digest: String,
    pub temperature: f64,
    pub sample_index: u32,
    pub response: String,
    pub timestamp: String,
}

impl CacheRecord {
    fn key(&self) -> Result<CacheKey> {
        Ok(CacheKey::new(
            self.model.clone(),
            PromptDigest::from_hex(&self.prompt_digest)?,
            self.temperature,
            self.sample_index,
        ))
    }
}

/// Append-only newline-delimited JSON response cache.
///
/// The whole file is indexed in memory at open. Appends go through a single
/// writer and each record is written with one `write_all` of a complete line,
/// so a crash can at worst leave one truncated final line, which is skipped
/// on the next open.
pub struct ResponseCache {
    path: Option<PathBuf>,
    index: RwLock<HashMap<CacheKey, String>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            index: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut index = HashMap::new();
        let mut needs_newline = false;
        if path.exists() {
            let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
            needs_newline = !raw.is_empty() && raw.last() != Some(&b'\n');
            for line in raw.split(|&b| b == b'\n') {
                let Ok(rec) = serde_json::from_slice::<CacheRecord>(line) else {
                    continue;
                };
                if let Ok(key) = rec.key() {
                    index.entry(key).or_insert(rec.response);
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if needs_newline {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(ResponseCache {
            path: Some(path.to_path_buf()),
            index: RwLock::new(index),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.index.read().unwrap().get(key).cloned()
    }

    /// Stores a response. A key that is already present is left untouched.
    pub fn insert(&self, key: CacheKey, response: &str) -> Result<()> {
        let mut writer = self.writer.lock().unwrap();
        if self.index.read().unwrap().contains_key(&key) {
            return Ok(());
        }
        if let Some(file) = writer.as_mut() {
            let rec = CacheRecord {
                model: key.model_name.clone(),
                prompt_digest: key.prompt_digest.to_hex(),
                temperature: key.temperature(),
                sample_index: key.sample_index,
                response: response.to_owned(),
                timestamp: chrono::Utc::now().to_rfc3339(),
            };
            let mut line = serde_json::to_vec(&rec)?;
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            file.write_all(&line).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.index.write().unwrap().insert(key, response.to_owned());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(prompt: &str, t: f64, i: u32) -> CacheKey {
        CacheKey::new("m", PromptDigest::of(prompt), t, i)
    }

    #[test]
    fn key_identity() {
        assert_eq!(key("p", 0.7, 1), key("p", 0.7, 1));
        assert_ne!(key("p", 0.7, 1), key("p ", 0.7, 1));
        assert_ne!(key("p", 0.7, 1), key("p", 0.7, 2));
        assert_ne!(key("p", 0.7, 1), key("p", 0.8, 1));
        assert_eq!(key("p", 0.0, 0), key("p", -0.0, 0));
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(key("a", 0.7, 0), "ANSWER: YES").unwrap();
            c.insert(key("a", 0.7, 1), "ANSWER: NO").unwrap();
            c.insert(key("a", 0.7, 1), "ignored").unwrap();
        }
        let raw = fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 2);
        let rec: CacheRecord = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
        assert_eq!(rec.model, "m");
        assert_eq!(rec.temperature, 0.7);

        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&key("a", 0.7, 1)).as_deref(), Some("ANSWER: NO"));
    }

    #[test]
    fn truncated_tail_is_skipped_and_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(key("a", 0.7, 0), "one").unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"model":"m","prompt_dig"#).unwrap();
        drop(f);

        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        c.insert(key("b", 0.7, 0), "two").unwrap();
        drop(c);
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key("b", 0.7, 0)).as_deref(), Some("two"));
    }

    #[test]
    fn concurrent_appends_never_interleave() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = ResponseCache::open(&path).unwrap();
        let long = "x".repeat(10_000);
        std::thread::scope(|s| {
            for t in 0..8u32 {
                let (c, long) = (&c, &long);
                s.spawn(move || {
                    for i in 0..25 {
                        c.insert(key("p", 0.5, t * 100 + i), long).unwrap();
                    }
                });
            }
        });
        let raw = fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 200);
        for line in raw.lines() {
            serde_json::from_str::<CacheRecord>(line).unwrap();
        }
    }
}
