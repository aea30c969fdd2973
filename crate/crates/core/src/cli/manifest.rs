use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Flags that never change results and are left out of the config hash.
const UNHASHED: &[&str] = &["out", "workers"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: serde_json::Value,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub tool_version: String,
    /// Relative to the manifest's directory.
    pub outputs: Vec<String>,
}

/// First 12 hex digits of SHA-256 over the command name and its result-affecting flags.
pub fn config_hash(command: &str, flags: &serde_json::Value) -> String {
    let mut hashed = flags.clone();
    if let Some(map) = hashed.as_object_mut() {
        for k in UNHASHED {
            map.remove(*k);
        }
    }
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(serde_json::to_string(&hashed).expect("json").as_bytes());
    hex::encode(h.finalize())[..12].to_string()
}

impl RunManifest {
    pub fn new(command: &str, flags: serde_json::Value, seeds: Vec<u64>) -> Self {
        let config_hash = config_hash(command, &flags);
        Self { command: command.into(), flags, seeds, config_hash, tool_version: env!("CARGO_PKG_VERSION").into(), outputs: Vec::new() }
    }

    /// `<kind>_<hash>_s<seed>.<ext>`, or `<kind>_<hash>.<ext>` for seedless commands.
    pub fn output_name(&self, kind: &str, ext: &str) -> String {
        match self.seeds.first() {
            Some(seed) => format!("{kind}_{}_s{seed}.{ext}", self.config_hash),
            None => format!("{kind}_{}.{ext}", self.config_hash),
        }
    }

    pub fn file_name(&self) -> String {
        self.output_name("manifest", "json")
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        std::fs::write(&path, serde_json::to_string_pretty(self).expect("json") + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_ignores_out_and_workers() {
        let a = config_hash("matrix", &json!({"seed": 1, "out": "x", "workers": 4}));
        let b = config_hash("matrix", &json!({"seed": 1, "out": "y", "workers": 1}));
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_ne!(a, config_hash("matrix", &json!({"seed": 2, "out": "x"})));
        assert_ne!(a, config_hash("shapley", &json!({"seed": 1})));
    }

    #[test]
    fn names_embed_hash_and_seed() {
        let m = RunManifest::new("matrix", json!({"seed": 3}), vec![3]);
        assert_eq!(m.output_name("matrix", "csv"), format!("matrix_{}_s3.csv", m.config_hash));
        let m = RunManifest::new("eval", json!({}), vec![]);
        assert_eq!(m.file_name(), format!("manifest_{}.json", m.config_hash));
    }
}
