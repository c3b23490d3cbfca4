//! Artifact layout under the output directory and per-stage run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, Experiment};
use crate::error::{CliError, CliResult};

pub const IDENTIFICATION: &str = "data/identification.jsonl";
pub const CONTEXT_DATA: &str = "data/context.jsonl";
pub const CALIBRATION_DATA: &str = "data/calibration.jsonl";
pub const TEST_DATA: &str = "data/test.jsonl";
pub const MC_DATA: &str = "data/mc.jsonl";
pub const MODEL_SET: &str = "model/model_set.json";
pub const CONTEXT_SETS: &str = "context/context.json";
pub const DD_SETS: &str = "reach/dd.json";
pub const MODEL_BASED_SETS: &str = "reach/model_based.json";
pub const TIGHTENED: &str = "labels/tightened.json";
pub const LABELS: &str = "labels/labels.json";
pub const WEIGHTS_DIR: &str = "weights";
pub const PREDICTIONS: &str = "predict/predictions.json";
pub const CAL_SCORES: &str = "calibrate/scores.csv";
pub const QUANTILES: &str = "calibrate/quantiles.json";
pub const CALIBRATED: &str = "calibrate/calibrated.json";
pub const CAL_FILTER: &str = "calibrate/filter.json";
pub const TEST_SCORES: &str = "evaluate/scores.csv";
pub const COVERAGE: &str = "evaluate/coverage.json";
pub const TABLE: &str = "report/table.csv";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    /// Relative artifact path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Reads and writes artifacts for one stage and remembers their checksums.
pub struct Store<'a> {
    exp: &'a Experiment,
    stage: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl<'a> Store<'a> {
    pub fn new(exp: &'a Experiment, stage: &'static str) -> Self {
        Store {
            exp,
            stage,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn stage(&self) -> &'static str {
        self.stage
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.exp.out.join(rel)
    }

    pub fn read_bytes(&mut self, rel: &str) -> CliResult<Vec<u8>> {
        let bytes = read_at(&self.path(rel))?;
        self.inputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Reads a file outside the output directory (e.g. user-supplied
    /// weights); recorded under its absolute path.
    pub fn read_external(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = read_at(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, rel: &str) -> CliResult<T> {
        let bytes = self.read_bytes(rel)?;
        serde_json::from_slice(&bytes).map_err(|e| malformed(&self.path(rel), e))
    }

    pub fn read_jsonl<T: DeserializeOwned>(&mut self, rel: &str) -> CliResult<Vec<T>> {
        let bytes = self.read_bytes(rel)?;
        let path = self.path(rel);
        let text = String::from_utf8(bytes).map_err(|e| malformed(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| malformed(&path, e)))
            .collect()
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, rel: &str, values: &[T]) -> CliResult<()> {
        let mut text = String::new();
        for v in values {
            text.push_str(&serde_json::to_string(v).expect("record serializes"));
            text.push('\n');
        }
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            stage: self.stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.exp.config_hash.clone(),
            master_seed: self.exp.master_seed(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
    }

    /// Writes `manifest/<stage>.json`.
    pub fn finish(self) -> CliResult<RunManifest> {
        let m = self.manifest();
        let rel = format!("manifest/{}.json", self.stage);
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        let path = self.exp.out.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(m)
    }
}

fn read_at(path: &Path) -> CliResult<Vec<u8>> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    std::fs::read(path).map_err(io_err(path))
}

fn malformed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
