//! Content-addressed on-disk completion cache.
//!
//! Layout: `<root>/<model_id>/<key-hex>.txt`, one file per completion.
//! Writes go through a temporary file that is linked into place without
//! clobbering, so the first writer of a key wins and later writes are no-ops.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use sha2::{Digest, Sha256};

/// Hex SHA-256 over the length-prefixed request components.
pub fn cache_key(model_id: &str, prompt: &[u8], temperature: f64, max_tokens: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update((model_id.len() as u64).to_le_bytes());
    hasher.update(model_id.as_bytes());
    hasher.update((prompt.len() as u64).to_le_bytes());
    hasher.update(prompt);
    hasher.update(temperature.to_bits().to_le_bytes());
    hasher.update(max_tokens.to_le_bytes());
    hex::encode(hasher.finalize())
}

/// Model ids such as `meta/llama-3.1-405b` become a single path component.
pub fn model_dir_name(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub key: String,
    pub value: String,
    pub created_at: SystemTime,
}

#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DiskCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, model_id: &str, key: &str) -> PathBuf {
        self.root.join(model_dir_name(model_id)).join(format!("{key}.txt"))
    }

    pub fn get(&self, model_id: &str, key: &str) -> io::Result<Option<CacheEntry>> {
        let path = self.path_for(model_id, key);
        match fs::read_to_string(&path) {
            Ok(value) => {
                let created_at = fs::metadata(&path)?.modified().unwrap_or(SystemTime::UNIX_EPOCH);
                Ok(Some(CacheEntry {
                    key: key.to_string(),
                    value,
                    created_at,
                }))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Stores `value` unless the key already exists; returns the stored value.
    pub fn put(&self, model_id: &str, key: &str, value: &str) -> io::Result<String> {
        let path = self.path_for(model_id, key);
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(value.as_bytes())?;
        tmp.flush()?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(value.to_string()),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => fs::read_to_string(&path),
            Err(e) => Err(e.error),
        }
    }
}
