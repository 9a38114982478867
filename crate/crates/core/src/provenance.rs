//! Provenance records attached to every pipeline output.
//!
//! Records are written as a JSON sidecar (`<file>.prov.json`) and, for
//! JSON-Lines graph files, also embedded as a first-line record so the file
//! itself names the run that produced it. Contents are fully determined by
//! the run configuration — no timestamps — so reruns stay byte-identical.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = std::fs::File::open(path)?;
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// Hex SHA-256 of an in-memory byte string.
pub fn bytes_digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short digest used in cache-friendly stage file names.
pub fn short_digest(bytes: &[u8]) -> String {
    bytes_digest(bytes)[..12].to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    /// Input path → content digest.
    pub inputs: BTreeMap<String, String>,
    /// Stage parameters worth auditing (budgets, dims, epochs, diagnostics).
    pub params: BTreeMap<String, serde_json::Value>,
}

impl Provenance {
    pub fn new(stage: &str, seed: u64) -> Self {
        Provenance {
            tool: "crossnet".to_string(),
            version: crate::VERSION.to_string(),
            stage: stage.to_string(),
            seed,
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn input(mut self, name: &str, digest: String) -> Self {
        self.inputs.insert(name.to_string(), digest);
        self
    }

    pub fn param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Writes the sidecar `<path>.prov.json` next to an output file.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".prov.json");
        let body = serde_json::to_string_pretty(self).expect("provenance serializes");
        std::fs::write(sidecar, body + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable() {
        assert_eq!(
            bytes_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(short_digest(b"abc").len(), 12);
    }

    #[test]
    fn sidecar_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("thing.txt");
        std::fs::write(&out, "payload").unwrap();
        let p = Provenance::new("sanitize", 7)
            .input("graph_a", "deadbeef".into())
            .param("eps_a", 5.0);
        p.write_sidecar(&out).unwrap();
        let text = std::fs::read_to_string(dir.path().join("thing.txt.prov.json")).unwrap();
        let back: Provenance = serde_json::from_str(&text).unwrap();
        assert_eq!(back.stage, "sanitize");
        assert_eq!(back.seed, 7);
        assert_eq!(back.inputs["graph_a"], "deadbeef");
    }
}
