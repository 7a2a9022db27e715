use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> Result<(String, u64)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let bytes = std::io::copy(&mut BufReader::new(file), &mut hasher)?;
    Ok((hex::encode(hasher.finalize()), bytes))
}

/// Run record written next to a command's outputs. Together with the
/// sibling `*.config.toml` it is enough to re-run the command.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
    pub details: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            seed: config.seed,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            errors: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<InputDigest> {
        let (sha256, bytes) = digest_file(path)?;
        let d = InputDigest {
            role: role.to_owned(),
            path: path.to_owned(),
            sha256,
            bytes,
        };
        self.inputs.push(d.clone());
        Ok(d)
    }

    pub fn warn(&mut self, message: String) {
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(
            key.to_owned(),
            serde_json::to_value(value).expect("serializable detail"),
        );
    }

    /// Writes `<stem>.manifest.json` and `<stem>.config.toml` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::write(dir.join(format!("{stem}.config.toml")), self.config.to_toml()?)?;
        let path = dir.join(format!("{stem}.manifest.json"));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
