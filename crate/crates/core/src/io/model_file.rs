//! JSON model files written by `fit` and read by `forecast`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::panel::{SeriesStats, ThresholdExpr, Transform};
use crate::pipeline::TtfmModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogInfo {
    pub expr: ThresholdExpr,
    /// Mean and standard deviation over the estimation window.
    pub window: Option<SeriesStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Time labels of the estimation window.
    pub times: Vec<String>,
    pub transforms: Vec<Transform>,
    /// Per-entry standardization statistics, row-fastest.
    pub standardization: Option<Vec<SeriesStats>>,
    pub exog: Option<ExogInfo>,
    pub cp_converged: bool,
    pub cp_iterations: usize,
    pub model: TtfmModel,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::ModelFile(format!(
                    "format_version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFile("format_version missing".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(crate::error::io_at(path))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(crate::error::io_at(path))?)
    }
}
