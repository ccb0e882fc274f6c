//! Stage reports and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub records_in: u64,
    pub records_out: u64,
    pub dead_lettered: u64,
    /// Filtered records by reason.
    pub filtered: BTreeMap<String, u64>,
    pub counters: BTreeMap<String, u64>,
    pub wall_time_secs: f64,
    /// Outputs were already up to date.
    #[serde(default)]
    pub skipped: bool,
}

impl StageReport {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    pub fn filter(&mut self, reason: &str, n: u64) {
        if n > 0 {
            *self.filtered.entry(reason.to_string()).or_default() += n;
        }
    }

    pub fn count(&mut self, counter: &str, n: u64) {
        *self.counters.entry(counter.to_string()).or_default() += n;
    }

    pub fn filtered_total(&self) -> u64 {
        self.filtered.values().sum()
    }

    /// `in == out + dead + filtered`.
    pub fn is_conserved(&self) -> bool {
        self.records_in == self.records_out + self.dead_lettered + self.filtered_total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub status: StageStatus,
    pub fingerprint: String,
    /// Output file name to content hash.
    pub outputs: BTreeMap<String, String>,
    pub report: StageReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    pub fn load_or_default(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| PipelineError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(PipelineError::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn completed(&self, stage: &str) -> Option<&StageEntry> {
        self.stages
            .get(stage)
            .filter(|e| e.status == StageStatus::Complete)
    }
}
