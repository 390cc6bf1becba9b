use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Input {
    pub role: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    topology_sha256: Option<&'a str>,
    inputs: &'a [Input],
    files: Vec<FileEntry>,
}

/// Everything a subcommand writes, recorded for the manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    inputs: Vec<Input>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory `{}`: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
        })
    }

    pub fn input(&mut self, role: &str, bytes: &[u8]) {
        self.inputs.push(Input {
            role: role.into(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&mut self, rel: &str, content: &str) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("cannot create `{}`: {e}", parent.display())))?;
        }
        fs::write(&path, content).map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.into(),
            bytes: content.len(),
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(mut self, command: &str, seed: Option<u64>, topology_sha256: Option<&str>) -> Result<(), CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest {
            tool: "coolsim",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            topology_sha256,
            inputs: &self.inputs,
            files: self.files.clone(),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write `{}`: {e}", path.display())))
    }
}
