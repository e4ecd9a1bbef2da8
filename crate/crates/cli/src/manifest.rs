//! Run manifest: the resolved invocation plus what it read and wrote.
//! Carries no timestamps or host data, so equal runs give equal manifests.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::{CliError, Command};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Command,
    pub output_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        invocation: Command,
        output_dir: PathBuf,
        inputs: Vec<PathBuf>,
        seed: Option<u64>,
        outputs: Vec<String>,
    ) -> Self {
        RunManifest {
            tool: "tcspc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            invocation,
            output_dir,
            inputs,
            seed,
            outputs,
        }
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| tcspc::Error::Schema(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, tcspc::Error> {
        serde_json::from_str(text).map_err(|e| tcspc::Error::Schema(format!("manifest: {e}")))
    }
}
