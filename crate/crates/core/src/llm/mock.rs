use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{Backend, BackendError, BackendRequest};
use crate::error::{Error, Result};
use crate::prompting::PromptDigest;

/// Mock responses: prompt digest (hex) to candidate response texts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockFixtures(pub BTreeMap<String, Vec<String>>);

impl MockFixtures {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn candidates(&self, digest: &PromptDigest) -> Option<&[String]> {
        self.0.get(&digest.to_hex()).map(Vec::as_slice)
    }

    /// Adds a candidate unless the same text is already listed.
    pub fn add(&mut self, digest: &PromptDigest, response: impl Into<String>) {
        let response = response.into();
        let list = self.0.entry(digest.to_hex()).or_default();
        if !list.contains(&response) {
            list.push(response);
        }
    }

    pub fn set(&mut self, digest: &PromptDigest, candidates: Vec<String>) {
        self.0.insert(digest.to_hex(), candidates);
    }

    pub fn merge(&mut self, other: MockFixtures) {
        for (digest, list) in other.0 {
            let mine = self.0.entry(digest).or_default();
            for r in list {
                if !mine.contains(&r) {
                    mine.push(r);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Picks which of `n` candidates answers sample `sample_index` at `temperature`.
///
/// SHA-256 over (digest, temperature bits, sample index), first 8 bytes as a
/// little-endian integer, reduced mod `n`. Reruns always pick the same text.
pub fn select_candidate(
    digest: &PromptDigest,
    temperature: f64,
    sample_index: u32,
    n: usize,
) -> usize {
    if n <= 1 {
        return 0;
    }
    let temperature = if temperature == 0.0 { 0.0 } else { temperature };
    let mut h = Sha256::new();
    h.update(b"tutor-moves/mock/v1");
    h.update(digest.0);
    h.update(temperature.to_bits().to_le_bytes());
    h.update(u64::from(sample_index).to_le_bytes());
    let out = h.finalize();
    let x = u64::from_le_bytes(out[..8].try_into().unwrap());
    (x % n as u64) as usize
}

/// Offline provider answering from fixtures.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: MockFixtures,
}

impl MockBackend {
    pub fn new(fixtures: MockFixtures) -> Self {
        MockBackend { fixtures }
    }
}

impl Backend for MockBackend {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        match self.fixtures.candidates(&req.digest) {
            Some(c) if !c.is_empty() => {
                let i = select_candidate(
                    &req.digest,
                    req.config.temperature,
                    req.sample_index,
                    c.len(),
                );
                Ok(c[i].clone())
            }
            _ => Err(BackendError::FixtureMiss(req.digest)),
        }
    }
}
