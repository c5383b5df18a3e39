//! Output directory bookkeeping: every file written through a [`BundleWriter`]
//! is hashed into `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    /// Relative path to SHA-256.
    pub files: BTreeMap<String, String>,
}

pub struct BundleWriter {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl BundleWriter {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Runs a writer into an in-memory buffer and stores the result as `name`.
    pub fn write_with<E>(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), E>) -> Result<()>
    where
        CliError: From<E>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Malformed {
            path: self.path(name),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file written by another routine.
    pub fn track(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes `manifest.json`; `config.toml` must already be in the bundle.
    pub fn finish(mut self, command: &str) -> Result<Manifest> {
        let config_sha256 = self
            .files
            .get(CONFIG)
            .cloned()
            .ok_or_else(|| CliError::MissingInput(self.path(CONFIG)))?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: CONFIG.to_string(),
            config_sha256,
            files: std::mem::take(&mut self.files),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.path(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn read_manifest(bundle: &Path) -> Result<Manifest> {
    let path = bundle.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path.clone()),
        _ => CliError::io(&path, e),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Malformed {
        path,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = BundleWriter::create(dir.path().join("out")).unwrap();
        b.write(CONFIG, b"x = 1\n").unwrap();
        b.write("sub/a.csv", b"a\n").unwrap();
        let m = b.finish("measure").unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(m.config_sha256, sha256_hex(b"x = 1\n"));
        assert_eq!(read_manifest(&dir.path().join("out")).unwrap(), m);
    }

    #[test]
    fn missing_manifest_is_missing_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_manifest(dir.path()), Err(CliError::MissingInput(_))));
    }
}
