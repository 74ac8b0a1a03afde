//! Provenance stamping for pipeline outputs: every artifact records the
//! SHA-256 of its inputs and the resolved run configuration so a reader can
//! tell exactly which bytes produced it.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// One provenance line per input: `label sha256=<hex> <detail>`.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub lines: Vec<String>,
}

impl Provenance {
    pub fn new() -> Self {
        Provenance { lines: Vec::new() }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        let hash = file_sha256(path)?;
        self.lines.push(format!("{label} sha256={hash} {}", path.display()));
        Ok(())
    }

    pub fn config(&mut self, canonical: &str) {
        let hash = sha256_hex(canonical.as_bytes());
        self.lines.push(format!("config sha256={hash} {canonical}"));
    }

    pub fn note(&mut self, line: String) {
        self.lines.push(line);
    }

    /// `# `-prefixed comment block for CSV outputs.
    pub fn csv_header(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Inject a `"provenance"` array into a JSON object.
    pub fn attach_json(&self, value: &mut serde_json::Value) {
        if let serde_json::Value::Object(map) = value {
            map.insert(
                "provenance".to_string(),
                serde_json::Value::Array(
                    self.lines
                        .iter()
                        .map(|l| serde_json::Value::String(l.clone()))
                        .collect(),
                ),
            );
        }
    }

    /// Newline-joined form for embedding in a model's `notes` field.
    pub fn notes(&self) -> String {
        self.lines.join("\n")
    }
}
