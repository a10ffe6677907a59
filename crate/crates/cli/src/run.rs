//! The `run.json` record every subcommand writes.

use std::fs;
use std::path::{Path, PathBuf};

use roadcast::model::CHECKPOINT_VERSION;
use roadcast::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RUN_FILE: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphSpec {
    Ring { links: usize },
    Files { links: PathBuf, edges: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub checkpoint_version: u32,
    pub command: String,
    pub graph: GraphSpec,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub train_days: Option<usize>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Subcommand-specific settings.
    #[serde(default)]
    pub options: serde_json::Value,
}

impl RunRecord {
    pub fn new(command: &str, graph: GraphSpec) -> Self {
        RunRecord {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_version: CHECKPOINT_VERSION,
            command: command.to_string(),
            graph,
            data: None,
            train_days: None,
            train: None,
            options: serde_json::Value::Null,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::usage(format!("--from-run {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("--from-run {}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(roadcast::Error::from)?;
        crate::commands::write_file(&dir.join(RUN_FILE), text.as_bytes())
    }
}
