//! The run config: where the inputs live and which knobs apply.
//!
//! Paths stay exactly as written in the file (reports echo them verbatim);
//! [`RunConfig::resolve`] rebases relative ones onto the config's directory
//! at the point of use.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use percept_core::metrics::BinSpec;
use serde::Deserialize;

use crate::error::CliError;

fn default_alpha() -> f64 {
    0.05
}

fn default_eta_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetEntry {
    pub id: String,
    pub path: PathBuf,
    /// Optional tag; threshold selection additionally runs per tag.
    #[serde(default)]
    pub group: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub classes: PathBuf,
    pub truth: PathBuf,
    #[serde(default)]
    pub predictions: Vec<SetEntry>,
    #[serde(default)]
    pub annotations: Vec<SetEntry>,
    /// Per-metric bin overrides, keyed by difficulty metric name.
    #[serde(default)]
    pub bins: BTreeMap<String, BinSpec>,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    base: PathBuf,
}

impl RunConfig {
    /// Parse the file; returns the config plus its raw bytes (digested into
    /// the manifest).
    pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(CliError::Validation(format!(
                "alpha must lie in (0, 1), got {}",
                cfg.alpha
            )));
        }
        cfg.base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, bytes))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}
