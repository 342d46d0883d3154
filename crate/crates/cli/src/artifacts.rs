//! Run manifests and hash-stamped artifact writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce a run. No timestamps: the hash of the
/// body identifies the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub inputs: Vec<InputDigest>,
    pub hash: String,
}

#[derive(Serialize)]
struct Body<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a Command,
    inputs: &'a [InputDigest],
}

impl Manifest {
    pub fn new(command: &Command, inputs: Vec<InputDigest>) -> Self {
        let mut m = Self {
            tool: "ctxboot".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.clone(),
            inputs,
            hash: String::new(),
        };
        m.hash = m.body_hash();
        m
    }

    pub fn body_hash(&self) -> String {
        let body = Body {
            tool: &self.tool,
            version: &self.version,
            command: &self.command,
            inputs: &self.inputs,
        };
        sha256_hex(serde_json::to_string(&body).expect("manifest serializes").as_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad manifest {}: {e}", path.display())))?;
        if m.body_hash() != m.hash {
            return Err(CliError::Config(format!("manifest {} hash mismatch", path.display())));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> CliResult<InputDigest> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Collects artifacts in memory and writes them only once the whole run has
/// succeeded, so a failing run leaves no partial output.
pub struct ArtifactSet {
    hash: String,
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn new(hash: &str) -> Self {
        Self {
            hash: hash.to_string(),
            files: Vec::new(),
        }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Pretty JSON with a `manifest_hash` field added to the top-level object.
    pub fn json(&mut self, name: &str, value: impl Serialize) {
        let mut v = serde_json::to_value(value).expect("artifact serializes");
        if let Value::Object(map) = &mut v {
            map.insert("manifest_hash".into(), Value::String(self.hash.clone()));
        }
        let mut text = serde_json::to_string_pretty(&v).expect("artifact serializes");
        text.push('\n');
        self.files.push((name.into(), text.into_bytes()));
    }

    /// CSV preceded by a `# manifest: <hash>` line.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> CliResult<()> {
        let mut out = format!("# manifest: {}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for row in rows {
                w.serialize(row).map_err(|e| CliError::io(name, e))?;
            }
            w.flush().map_err(|e| CliError::io(name, e))?;
        }
        self.files.push((name.into(), out));
        Ok(())
    }

    /// Plain text preceded by a `# manifest: <hash>` line.
    pub fn text(&mut self, name: &str, body: &str) {
        let text = format!("# manifest: {}\n{body}", self.hash);
        self.files.push((name.into(), text.into_bytes()));
    }

    pub fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn write(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        self.files
            .into_iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// Stamps and writes the manifest alongside the other artifacts.
pub fn finish(mut set: ArtifactSet, manifest: &Manifest, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    set.raw(MANIFEST, text.into_bytes());
    set.write(dir)
}
