//! CSV payloads, JSON sidecars and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Seventeen significant digits, enough to round-trip every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column-major table written as CSV with a header row.
pub fn csv_string(headers: &[&str], columns: &[&[f64]]) -> Result<String> {
    if headers.len() != columns.len() {
        return Err(Error::Io("CSV header and column counts differ".into()));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Io("CSV columns have different lengths".into()));
    }
    let mut s = headers.join(",");
    s.push('\n');
    for r in 0..rows {
        for (k, c) in columns.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            s.push_str(&fmt_f64(c[r]));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
}

/// Writes files under one output directory and records their hashes.
pub struct OutputDir {
    pub root: PathBuf,
    pub written: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), written: vec![] })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.written.push(OutputFile { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, headers: &[&str], columns: &[&[f64]]) -> Result<PathBuf> {
        let s = csv_string(headers, columns)?;
        self.write(name, &s)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        self.write(name, &(s + "\n"))
    }

    /// CSV payload plus a JSON sidecar describing it.
    pub fn csv_with_sidecar<T: Serialize>(&mut self, stem: &str, headers: &[&str], columns: &[&[f64]], meta: &T) -> Result<()> {
        self.csv(&format!("{stem}.csv"), headers, columns)?;
        self.json(&format!("{stem}.json"), meta)?;
        Ok(())
    }
}

/// Machine-readable error record.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord { error: e.kind().to_string(), message: e.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let s = csv_string(&["a", "b"], &[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.starts_with("a,b\n1.0000000000000000e0,3.0000000000000000e0\n"));
        assert!(csv_string(&["a"], &[&[1.0], &[2.0]]).is_err());
    }

    #[test]
    fn hashes_are_hex() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
