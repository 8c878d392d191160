//! Append-compacted feature store.
//!
//! Emulates the production key-value feature store with a local JSONL file:
//! writes append one record per upsert, reads replay the file last-wins,
//! and startup compacts it back to one line per item.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use mercat_core::error::{Error, Result};

/// Stored embeddings for one item, one vector per bucket.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureStoreEntry {
    pub item_id: String,
    pub title: String,
    pub updated_at: u64,
    /// Bucket id -> embedding (f32 on disk, matching the index width).
    pub embeddings: BTreeMap<String, Vec<f32>>,
}

#[derive(Debug)]
pub struct FeatureStore {
    path: PathBuf,
    entries: BTreeMap<String, FeatureStoreEntry>,
}

impl FeatureStore {
    /// Replay the file (if present) last-wins and compact it.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in content.lines().filter(|l| !l.trim().is_empty()) {
                let entry: FeatureStoreEntry = serde_json::from_str(line)?;
                entries.insert(entry.item_id.clone(), entry);
            }
        }
        let store = FeatureStore {
            path: path.to_path_buf(),
            entries,
        };
        store.compact()?;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&FeatureStoreEntry> {
        self.entries.get(item_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FeatureStoreEntry> {
        self.entries.values()
    }

    /// Upsert one entry: last write wins in memory, one line appended on
    /// disk before this returns.
    pub fn put(&mut self, entry: FeatureStoreEntry) -> Result<()> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let line = serde_json::to_string(&entry)?;
        writeln!(file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.entries.insert(entry.item_id.clone(), entry);
        Ok(())
    }

    /// Rewrite the file with exactly one line per live entry.
    pub fn compact(&self) -> Result<()> {
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        std::fs::write(&self.path, out).map_err(|e| Error::io(&self.path, e))
    }
}
