use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::request::Capability;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderMeta {
    pub backend_name: String,
    pub model_name: String,
    #[serde(default)]
    pub settings: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub request_key: String,
    pub capability: Capability,
    pub payload: Value,
    pub body: Value,
    pub provider_meta: ProviderMeta,
    /// Seconds since the Unix epoch at which the backend answered.
    pub timestamp: u64,
}

/// On-disk response store laid out as `{root}/{capability}/{key[..2]}/{key}.json`.
///
/// Entries are written once through a temp file and a no-clobber rename; an
/// existing entry is never replaced.
#[derive(Debug, Clone)]
pub struct CacheStore {
    root: PathBuf,
}

impl CacheStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path(&self, capability: Capability, key: &str) -> PathBuf {
        let shard = &key[..key.len().min(2)];
        self.root
            .join(capability.as_str())
            .join(shard)
            .join(format!("{key}.json"))
    }

    pub fn get(&self, capability: Capability, key: &str) -> Result<Option<ProviderResponse>> {
        let path = self.entry_path(capability, key);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn put(&self, response: &ProviderResponse) -> Result<()> {
        let path = self.entry_path(response.capability, &response.request_key);
        let dir = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        let text = serde_json::to_string_pretty(response)?;
        tmp.write_all(text.as_bytes()).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(()),
            Err(e) => Err(Error::io(&path, e.error)),
        }
    }

    /// Number of stored entries, across all capabilities.
    pub fn len(&self) -> usize {
        fn count(dir: &Path) -> usize {
            std::fs::read_dir(dir)
                .map(|rd| {
                    rd.flatten()
                        .map(|e| {
                            let p = e.path();
                            if p.is_dir() {
                                count(&p)
                            } else {
                                usize::from(p.extension().is_some_and(|x| x == "json"))
                            }
                        })
                        .sum()
                })
                .unwrap_or(0)
        }
        count(&self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
