//! Run manifest and timing sidecar.
//!
//! `manifest.json` echoes the full configuration, the crate version, any
//! computed metrics, and the paths of every emitted file; rerunning a command
//! with the same flags reproduces it byte for byte. Wall-clock data lives in
//! a separate `timing.json` so the reproducible outputs stay clean of
//! volatile values.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::cli_error::{CliError, CliResult};

#[derive(Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<serde_json::Value>,
    pub outputs: Vec<String>,
    /// Timestamps and durations are written here, not in this file.
    pub timing_file: String,
}

#[derive(Serialize)]
struct Timing {
    start_unix_ms: u128,
    wall_seconds: f64,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Writes `manifest.json` plus the `timing.json` sidecar. `outputs` holds
/// file names relative to `dir`, so manifests are location-independent.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    metrics: Option<serde_json::Value>,
    mut outputs: Vec<String>,
    start: SystemTime,
    wall_seconds: f64,
) -> CliResult<()> {
    let timing = Timing {
        start_unix_ms: start
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        wall_seconds,
    };
    write_json(&dir.join("timing.json"), &timing)?;
    outputs.push("timing.json".to_string());
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
        metrics,
        outputs,
        timing_file: "timing.json".to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}
