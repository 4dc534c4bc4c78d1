use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Serialize)]
struct Hashed {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    inputs: &'a [Hashed],
    outputs: &'a [Hashed],
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Output directory of one run. Tracks the input files it read and the
/// artifacts it wrote, and records both in a provenance file on `finish`.
/// Files whose name starts with `timings` hold wall-clock measurements and
/// are listed without a hash.
pub struct Artifacts {
    root: PathBuf,
    inputs: Vec<Hashed>,
    outputs: Vec<Hashed>,
}

impl Artifacts {
    pub fn create(root: PathBuf) -> Result<Self, Failure> {
        std::fs::create_dir_all(&root)
            .map_err(|e| Failure::Runtime(format!("cannot create output dir {}: {e}", root.display())))?;
        Ok(Self { root, inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let display = path.display().to_string();
        if self.inputs.iter().any(|h| h.path == display) {
            return Ok(());
        }
        let sha256 = sha256_file(path)?;
        self.inputs.push(Hashed { path: display, sha256 });
        Ok(())
    }

    /// Registers a file already written under the output dir.
    pub fn output(&mut self, name: &str) -> Result<(), Failure> {
        let sha256 = if is_timing(name) { String::new() } else { sha256_file(&self.path(name))? };
        eprintln!("wrote {}", self.path(name).display());
        self.outputs.push(Hashed { path: name.to_string(), sha256 });
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.output(name)
    }

    pub fn finish(self, command: &str, config: &RunConfig) -> Result<(), Failure> {
        let provenance = Provenance {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&provenance).map_err(|e| Failure::Runtime(e.to_string()))?;
        text.push('\n');
        let path = self.path(PROVENANCE_FILE);
        std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn is_timing(name: &str) -> bool {
    Path::new(name).file_name().and_then(|f| f.to_str()).is_some_and(|f| f.starts_with("timings"))
}
