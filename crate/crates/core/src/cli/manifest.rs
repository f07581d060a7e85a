//! Run manifests and atomic output writes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use crate::corpus::to_canonical_json;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: &str = "ddi-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: Config,
    /// Input path to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub tool_version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// `<path>.<suffix>`, next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{name}.{suffix}"))
}

/// Records inputs and outputs of one subcommand run.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, config: &Config) -> Self {
        Recorder {
            manifest: RunManifest {
                version: MANIFEST_VERSION.into(),
                command: command.into(),
                config: config.clone(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                seed: config.seed,
                wall_clock_seconds: 0.0,
                tool_version: env!("CARGO_PKG_VERSION").into(),
            },
            started: Instant::now(),
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(path.display().to_string());
        Ok(())
    }

    /// Writes the manifest next to `primary` and returns its path.
    pub fn finish(mut self, primary: &Path) -> Result<PathBuf> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let path = sibling(primary, "manifest.json");
        write_atomic(&path, &to_canonical_json(&self.manifest))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn manifest_lists_digests_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, b"x").unwrap();
        let out = dir.path().join("out.json");
        let mut r = Recorder::new("score", &Config::default());
        r.read(&input).unwrap();
        r.write(&out, b"{}").unwrap();
        let m: RunManifest = serde_json::from_slice(&std::fs::read(r.finish(&out).unwrap()).unwrap()).unwrap();
        assert_eq!(m.inputs.values().next().unwrap(), &sha256_hex(b"x"));
        assert_eq!(m.outputs, vec![out.display().to_string()]);
        assert_eq!(m.seed, 0);
    }
}
