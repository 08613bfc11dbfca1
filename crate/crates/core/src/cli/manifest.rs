//! Run manifests written next to every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Command;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Fully resolved command line; replaying it reproduces the outputs.
    pub invocation: Command,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Resolved library configuration.
    pub config: serde_json::Value,
    /// Wall-clock seconds per stage.
    pub wall_times: BTreeMap<String, f64>,
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(invocation: Command) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            invocation,
            threads: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: serde_json::Value::Null,
            wall_times: BTreeMap::new(),
            results: serde_json::Value::Null,
        }
    }

    pub fn write_for(&self, output: &Path) -> Result<PathBuf> {
        let path = manifest_path(output);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Invariant(format!("manifest serialisation failed: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", format!("{}: {e}", path.display())))
    }
}

/// `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}
