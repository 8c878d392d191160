//! Bucket routing: a deterministic hash of the user id selects which
//! encoder model serves the request.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mercat_core::error::{Error, Result};
use mercat_core::hash::fnv1a64;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoutingConfig {
    /// Bucket id -> encoder model file. Bucket order for hashing is the
    /// sorted key order, so assignment is stable across restarts.
    pub buckets: BTreeMap<String, PathBuf>,
    /// Used when a request carries no user id.
    pub default_bucket: String,
    /// Append-compacted feature store file.
    pub store_path: PathBuf,
    /// Optional corpus to embed and index at startup.
    #[serde(default)]
    pub items_path: Option<PathBuf>,
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.buckets.is_empty() {
            return Err(Error::Config("routing needs at least one bucket".into()));
        }
        if !self.buckets.contains_key(&self.default_bucket) {
            return Err(Error::Config(format!(
                "default bucket {:?} is not a configured bucket",
                self.default_bucket
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let config: RoutingConfig = serde_json::from_slice(&bytes)?;
        config.validate()?;
        Ok(config)
    }

    /// Pure function of (user_id, config): hash mod bucket count over the
    /// sorted bucket ids. Empty/absent user ids fall to the default bucket.
    pub fn bucket_of(&self, user_id: &str) -> &str {
        if user_id.is_empty() {
            return &self.default_bucket;
        }
        let keys: Vec<&String> = self.buckets.keys().collect();
        let idx = (fnv1a64(user_id.as_bytes()) % keys.len() as u64) as usize;
        keys[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(bucket_names: &[&str]) -> RoutingConfig {
        RoutingConfig {
            buckets: bucket_names
                .iter()
                .map(|b| (b.to_string(), PathBuf::from(format!("{b}.menc"))))
                .collect(),
            default_bucket: bucket_names[0].to_string(),
            store_path: PathBuf::from("store.jsonl"),
            items_path: None,
        }
    }

    #[test]
    fn assignment_is_stable_and_covers_buckets() {
        let cfg = config(&["control", "treatment"]);
        let mut seen = std::collections::HashSet::new();
        for i in 0..200 {
            let user = format!("user-{i}");
            let a = cfg.bucket_of(&user).to_string();
            let b = cfg.bucket_of(&user).to_string();
            assert_eq!(a, b);
            seen.insert(a);
        }
        assert_eq!(seen.len(), 2, "hash should reach both buckets");
    }

    #[test]
    fn empty_user_gets_default() {
        let cfg = config(&["control", "treatment"]);
        assert_eq!(cfg.bucket_of(""), "control");
    }

    #[test]
    fn validation_rejects_bad_default() {
        let mut cfg = config(&["a"]);
        cfg.default_bucket = "missing".into();
        assert!(cfg.validate().is_err());
    }
}
