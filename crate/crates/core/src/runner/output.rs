//! CSV tables and the run manifest.
//!
//! Floats are written in Rust's shortest round-trip form, so identical
//! results always give identical bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Shortest decimal that parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// One written file with its checksum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub file: String,
    pub sha256: String,
    /// Data rows, not counting the header or metadata lines.
    pub rows: usize,
}

/// A table assembled in memory before it is written in one go.
#[derive(Debug, Clone, Default)]
pub struct Table {
    metadata: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            metadata: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Adds a `# key=value` line written above the header.
    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Row of floats.
    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for (k, v) in &self.metadata {
            out.extend_from_slice(format!("# {k}={v}\n").as_bytes());
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.header).map_err(csv_error)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_error)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Single writer for one run's output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<()> {
        let bytes = table.to_bytes()?;
        std::fs::write(self.root.join(name), &bytes)?;
        self.entries.push(OutputEntry {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
            rows: table.len(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<OutputEntry> {
        self.entries
    }
}

/// Sidecar written as `manifest.json` next to the tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputEntry>,
    /// Experiment-specific numbers: fitted exponents, windows, β, distances.
    pub results: serde_json::Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }

    /// Recomputes every listed checksum and names the first file that no
    /// longer matches.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for e in &self.outputs {
            let bytes = std::fs::read(dir.join(&e.file))?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(Error::Contract(format!("{} does not match its manifest checksum", e.file)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["t_ms", "F"]).meta("generator", "X");
        t.push_f64(&[0.0, 1.0]);
        t.push_f64(&[0.1, 1e-10]);
        let text = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(text, "# generator=X\nt_ms,F\n0.0,1.0\n0.1,1e-10\n");
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let mut t = Table::new(&["x"]);
        t.push_f64(&[1.5]);
        out.write_table("a.csv", &t).unwrap();
        let manifest = RunManifest {
            kind: "fotoc".into(),
            code_version: "0".into(),
            config: super::super::config::parse_config(
                "[experiment]\nkind = \"twa\"\n[model]\nn_spins = 4\n",
            )
            .unwrap(),
            seed: 1,
            threads: 1,
            wall_time_s: 0.0,
            outputs: out.into_entries(),
            results: serde_json::Value::Null,
        };
        manifest.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        back.verify(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n1.25\n").unwrap();
        assert!(back.verify(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = fmt_f64(x);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
