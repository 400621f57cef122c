//! Run manifest written next to every training run.
//!
//! The manifest is written before training starts and rewritten when the run
//! finishes or fails. `domadapt train --manifest <file>` reruns it exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use domadapt::train::{TrainConfig, METRICS_CSV_VERSION};
use domadapt::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FORMAT_VERSION: u64 = 1;
const MANIFEST_KIND: &str = "domadapt-run-manifest";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub message: String,
    pub exit_code: u8,
    pub epoch: Option<usize>,
    pub batch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u64,
    pub kind: String,
    pub tool_version: String,
    pub config_path: Option<PathBuf>,
    /// `key=value` overrides applied on top of the config file.
    pub overrides: Vec<String>,
    /// Fully resolved configuration; a rerun uses this and nothing else.
    pub config: TrainConfig,
    pub data_dir: PathBuf,
    pub datasets: Vec<PathBuf>,
    pub vocab_hash: String,
    pub output_dir: PathBuf,
    pub metrics_csv: String,
    pub metrics_csv_version: u32,
    pub checkpoint: String,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub status: Status,
    pub failure: Option<Failure>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        config_path: Option<PathBuf>,
        overrides: Vec<String>,
        config: TrainConfig,
        data_dir: PathBuf,
        datasets: Vec<PathBuf>,
        vocab_hash: String,
        output_dir: PathBuf,
    ) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            kind: MANIFEST_KIND.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_path,
            overrides,
            config,
            data_dir,
            datasets,
            vocab_hash,
            output_dir,
            metrics_csv: METRICS_FILE.into(),
            metrics_csv_version: METRICS_CSV_VERSION,
            checkpoint: CHECKPOINT_FILE.into(),
            started_at: unix_now(),
            finished_at: None,
            status: Status::Running,
            failure: None,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Version {
                found: m.format_version,
                expected: MANIFEST_FORMAT_VERSION,
            });
        }
        if m.kind != MANIFEST_KIND {
            return Err(Error::Format {
                path: path.into(),
                line: 1,
                msg: format!("unexpected kind {:?}", m.kind),
            });
        }
        Ok(m)
    }
}
