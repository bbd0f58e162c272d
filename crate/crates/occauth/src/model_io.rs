//! Versioned JSON model files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use occauth_core::classifiers::{OccKind, OccPipeline};

use crate::error::{AppError, Result};

pub const MODEL_FORMAT: &str = "occauth-model";
pub const MODEL_VERSION: u32 = 1;

/// A fitted pipeline plus the acceptance threshold chosen for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kind: OccKind,
    /// Genuine-training-score quantile threshold, when one was selected.
    pub threshold: Option<f64>,
    pub pipeline: OccPipeline,
}

impl ModelFile {
    pub fn new(pipeline: OccPipeline, threshold: Option<f64>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: pipeline.kind(),
            threshold,
            pipeline,
        }
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let f = File::create(path).map_err(AppError::io(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, model).map_err(AppError::json(path))?;
    w.flush().map_err(AppError::io(path))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let f = File::open(path).map_err(AppError::io(path))?;
    let m: ModelFile =
        serde_json::from_reader(BufReader::new(f)).map_err(AppError::json(path))?;
    if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
        return Err(AppError::Config(format!(
            "{}: unsupported model format {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
            path.display(),
            m.format,
            m.version
        )));
    }
    if m.kind != m.pipeline.kind() {
        return Err(AppError::Config(format!(
            "{}: header says {} but the model is {}",
            path.display(),
            m.kind,
            m.pipeline.kind()
        )));
    }
    Ok(m)
}
