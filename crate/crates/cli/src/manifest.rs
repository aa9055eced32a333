//! Run manifests: every output file is accompanied by a manifest holding the
//! fully resolved configuration (re-parseable), the tool version, the seed
//! and the produced files. Rerunning a command from a manifest reproduces
//! the data files byte for byte.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::config::Config;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Canonical TOML of the fully resolved configuration.
    pub resolved_config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    /// Filled in when the run completes.
    pub wall_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<nvraman::FrameAudit>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, outputs: &[String]) -> RunManifest {
        let resolved = config.to_canonical_toml();
        let digest = Sha256::digest(resolved.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        RunManifest {
            tool: "nvraman".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            resolved_config: resolved,
            config_sha256: hex,
            seed: config.run.seed,
            outputs: outputs.to_vec(),
            wall_time_s: None,
            diagnostics: Vec::new(),
            audit: None,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

}

/// Load a configuration from either a TOML config file or a previous run's
/// JSON manifest (detected by content).
pub fn load_config(path: &Path) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let manifest: RunManifest =
            serde_json::from_str(&text).context("parsing JSON run manifest")?;
        Config::from_toml(&manifest.resolved_config)
    } else {
        Config::from_toml(&text)
    }
}
