//! Run manifests written next to every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::table::write_bytes;

/// Output file and the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; replaying them reproduces the outputs.
    pub argv: Vec<String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub precision_tier: String,
    pub tool_version: String,
    /// Seconds since the epoch, from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: u64,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical JSON form (object keys sorted, no whitespace).
pub fn config_hash(config: &serde_json::Value) -> String {
    // serde_json's default map is ordered, so this serialization is canonical
    sha256_hex(config.to_string().as_bytes())
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return t;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], config: &serde_json::Value, seed: Option<u64>, precision_tier: String) -> Self {
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_hash: config_hash(config),
            seed,
            precision_tier,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.outputs.push(OutputDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Sidecar path `<out>.manifest.json`.
    pub fn sidecar(out: &Path) -> PathBuf {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        out.with_file_name(name)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Json { path: path.into(), source: e })?;
        write_bytes(path, format!("{text}\n").as_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.into(), source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":[1,2],"b":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(RunManifest::sidecar(Path::new("out/risks.csv")), PathBuf::from("out/risks.csv.manifest.json"));
    }
}
