use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hmhe::enhance::PipelineConfig;
use serde::{Deserialize, Serialize};

/// Bumped whenever a CSV layout written by the CLI changes.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub csv_schema: u32,
    pub config: PipelineConfig,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub extra: serde_json::Value,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, config: PipelineConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema: CSV_SCHEMA,
            config,
            seed: config.noise_seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
            started_unix: now(),
            finished_unix: 0.0,
        }
    }

    pub fn write(mut self, path: &Path) -> Result<(), String> {
        self.finished_unix = now();
        let text = serde_json::to_string_pretty(&self).map_err(|e| e.to_string())?;
        std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Reads a pipeline config, or the config snapshot inside a run manifest.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, String> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let inner = match value.get("config") {
        Some(cfg) if value.get("command").is_some() => cfg.clone(),
        _ => value,
    };
    let cfg: PipelineConfig =
        serde_json::from_value(inner).map_err(|e| format!("{}: {e}", path.display()))?;
    cfg.validate().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(cfg)
}
