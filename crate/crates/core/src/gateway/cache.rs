//! Content-addressed response cache on disk.
//!
//! Entries live at `<dir>/<key[..2]>/<key>.json`. A request is cacheable
//! when it is greedy (temperature 0) or carries an explicit seed. Writes go
//! through a temp file and a rename; concurrent callers for the same key are
//! serialized so the backend is hit at most once per key.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{cache_key, ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model_id: String,
    text: String,
    usage: Usage,
}

pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<B> std::fmt::Debug for CachedBackend<B> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CachedBackend")
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

impl<B: ChatBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        CachedBackend {
            inner,
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    /// `~/.tomloom/cache`, or `./.tomloom/cache` when no home is set.
    pub fn default_dir() -> PathBuf {
        std::env::var_os("HOME")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join(".tomloom")
            .join("cache")
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn is_cacheable(req: &ChatRequest) -> bool {
        req.temperature == 0.0 || req.seed.is_some()
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    fn read(path: &Path) -> Option<CacheEntry> {
        let text = fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write(path: &Path, entry: &CacheEntry) -> Result<(), GatewayError> {
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", path.display()));
        let parent = path.parent().expect("cache paths have a parent");
        fs::create_dir_all(parent).map_err(err)?;
        let tmp = parent.join(format!(".{}.{}.tmp", entry.key, std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(serde_json::to_string(entry).unwrap().as_bytes())
            .map_err(err)?;
        f.sync_all().map_err(err)?;
        fs::rename(&tmp, path).map_err(err)
    }
}

impl<B: ChatBackend> ChatBackend for CachedBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if !Self::is_cacheable(req) {
            return self.inner.complete(req);
        }
        let key = cache_key(req);
        let path = self.path_for(&key);
        let lock = self.key_lock(&key);
        let _guard = lock.lock().unwrap();
        if let Some(entry) = Self::read(&path) {
            return Ok(ChatResponse {
                text: entry.text,
                usage: entry.usage,
                cached: true,
                latency_ms: 0,
            });
        }
        let response = self.inner.complete(req)?;
        Self::write(
            &path,
            &CacheEntry {
                key,
                model_id: req.model_id.clone(),
                text: response.text.clone(),
                usage: response.usage,
            },
        )?;
        Ok(response)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}
