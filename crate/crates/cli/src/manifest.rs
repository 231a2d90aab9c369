use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Record of one command invocation, written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; `rerun` replays these.
    pub argv: Vec<String>,
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(command: &str, argv: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config: None,
            seed: None,
            started_unix: now_unix(),
            finished_unix: 0.0,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: format!("disparity {}", env!("CARGO_PKG_VERSION")),
        }
    }

    pub fn write(mut self, path: &Path) -> CliResult<()> {
        self.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::usage(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}
