//! Content-addressed cache of provider responses.
//!
//! Entries are keyed by a digest of (provider id, template id+version,
//! rendered prompt). A hit replays the stored raw output byte-for-byte,
//! so cached pipelines never touch the network.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProviderError;

/// Stored response; the label is re-derived from `raw` on hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub raw: String,
    pub confidence: Option<f64>,
    pub provider_id: String,
}

/// In-memory map with optional write-through to `<dir>/<digest>.json`.
pub struct ResponseCache {
    dir: Option<PathBuf>,
    mem: Mutex<BTreeMap<String, CacheEntry>>,
}

impl ResponseCache {
    /// Cache that lives only for the process; used in tests and when no
    /// store root is configured.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            mem: Mutex::new(BTreeMap::new()),
        }
    }

    /// Cache persisted as content-addressed files under `dir`.
    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| ProviderError::Cache {
            reason: format!("create {}: {e}", dir.display()),
        })?;
        Ok(Self {
            dir: Some(dir),
            mem: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn get(&self, digest: &str) -> Result<Option<CacheEntry>, ProviderError> {
        if let Some(entry) = self.mem.lock().expect("cache lock").get(digest) {
            return Ok(Some(entry.clone()));
        }
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let path = dir.join(format!("{digest}.json"));
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read_to_string(&path).map_err(|e| ProviderError::Cache {
            reason: format!("read {}: {e}", path.display()),
        })?;
        let entry: CacheEntry = serde_json::from_str(&bytes).map_err(|e| ProviderError::Cache {
            reason: format!("parse {}: {e}", path.display()),
        })?;
        self.mem
            .lock()
            .expect("cache lock")
            .insert(digest.to_string(), entry.clone());
        Ok(Some(entry))
    }

    pub fn put(&self, digest: &str, entry: CacheEntry) -> Result<(), ProviderError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{digest}.json"));
            let body = serde_json::to_string(&entry).expect("cache entry serializes");
            fs::write(&path, body).map_err(|e| ProviderError::Cache {
                reason: format!("write {}: {e}", path.display()),
            })?;
        }
        self.mem
            .lock()
            .expect("cache lock")
            .insert(digest.to_string(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mem.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Digest identifying one logical request.
pub fn cache_digest(provider_id: &str, template_tag: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(provider_id.as_bytes());
    hasher.update([0x1e]);
    hasher.update(template_tag.as_bytes());
    hasher.update([0x1e]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}
