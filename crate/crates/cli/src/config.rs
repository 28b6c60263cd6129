//! Run configuration: a JSON file mirroring `TrainConfig` plus paths, with
//! command-line flags layered on top.

use std::fs;
use std::path::{Path, PathBuf};

use mmfnd::pipeline::TrainConfig;
use mmfnd::Execution;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub train: TrainConfig,
    /// Training JSONL, or a directory holding `train.jsonl` and `test.jsonl`.
    pub data: Option<PathBuf>,
    /// Evaluation JSONL; defaults to `test.jsonl` beside the training file.
    pub test_data: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub execution: Execution,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| mmfnd::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// `(train, test)` paths after directory expansion.
    pub fn data_paths(&self) -> Result<(PathBuf, Option<PathBuf>), CliError> {
        let data = self
            .data
            .clone()
            .ok_or_else(|| CliError::Usage("no dataset given (--data or \"data\" in config)".into()))?;
        let (train, sibling) = if data.is_dir() {
            (data.join("train.jsonl"), data.join("test.jsonl"))
        } else {
            let sibling = data.with_file_name("test.jsonl");
            (data, sibling)
        };
        let test = match &self.test_data {
            Some(t) => Some(t.clone()),
            None if sibling.is_file() && sibling != train => Some(sibling),
            None => None,
        };
        Ok((train, test))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output directory given (--out)".into()))
    }

    /// Writes the effective configuration to `dir/effective_config.json`.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("effective_config.json");
        let body = serde_json::to_string_pretty(self).map_err(mmfnd::Error::from)?;
        crate::write_file(&path, &(body + "\n"))
    }
}
