//! Batch front end: run configuration, pipeline stages, batch prediction with
//! an append-only log, and report comparison.
//!
//! Exit codes are stable: 0 success, 2 missing prerequisite, 3 validation
//! failure, 4 internal error. A failing command prints one JSON line on
//! stderr: `{"error":"<kind>","exit_code":N,"message":"..."}`.

mod compare;
mod config;
mod pipeline;
mod predict;

use std::path::Path;

use chrono::{DateTime, Utc};

pub use compare::{cmd_compare, compare_reports, Comparison, Verdict};
pub use config::{
    AugmentSettings, CalibrateSettings, DataPaths, MineSettings, RunConfig, CLOCK_ENV,
};
pub use pipeline::{
    augment_splits, calibrate_model, cmd_pipeline, expand_test_versions, mine_splits, parse_stages,
    Stage, StageOutputs,
};
pub use predict::{cmd_predict, read_log, verify_log, PredictionRecord};

use crate::augment::AugmentError;
use crate::corpus::{timestamp, CorpusError};
use crate::embed::{
    load_precomputed, EmbedError, EmbedderConfig, Encoder, EncoderKind, HashingEncoder,
    PrecomputedEncoder,
};
use crate::kpi::KpiError;
use crate::mine::MineError;
use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    MissingPrerequisite(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingPrerequisite(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingPrerequisite(_) => "missing_prerequisite",
            CliError::Validation(_) => "validation",
            CliError::Internal(_) => "internal",
        }
    }

    /// Single-line machine-parsable rendering.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }

    pub fn missing(path: &Path, what: &str) -> Self {
        CliError::MissingPrerequisite(format!("{what} not found: {}", path.display()))
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::missing(path, "file")
        } else {
            CliError::Internal(format!("{}: {e}", path.display()))
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingPrerequisite(e.to_string())
            }
            CorpusError::Io { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingPrerequisite(e.to_string())
            }
            EmbedError::Io { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(_, ref source) if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingPrerequisite(e.to_string())
            }
            ModelError::Io(..) | ModelError::NonFinite(_) => CliError::Internal(e.to_string()),
            ModelError::Embed(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<KpiError> for CliError {
    fn from(e: KpiError) -> Self {
        match e {
            KpiError::Model(inner) => inner.into(),
            KpiError::ThresholdUnset(_) => CliError::MissingPrerequisite(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MineError> for CliError {
    fn from(e: MineError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Resolves the clock: explicit pin, then the environment override, then
/// the config file, then wall-clock time.
pub fn resolve_clock(flag: Option<&str>, config: Option<&str>) -> Result<DateTime<Utc>, CliError> {
    let env = std::env::var(CLOCK_ENV).ok();
    match flag.or(env.as_deref()).or(config) {
        Some(raw) => timestamp::parse(raw).map_err(CliError::Validation),
        None => Ok(Utc::now().with_timezone(&Utc)),
    }
}

/// Hashing encoder for `cfg`, or a precomputed lookup when a vector file
/// is supplied.
pub fn build_encoder(
    cfg: &EmbedderConfig,
    vectors: Option<&Path>,
) -> Result<Box<dyn Encoder>, CliError> {
    match vectors {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::missing(path, "vector file"));
            }
            let map = load_precomputed(path, cfg.dim)?;
            Ok(Box::new(PrecomputedEncoder::new(cfg.dim, map)?))
        }
        None if cfg.kind == EncoderKind::Precomputed => Err(CliError::MissingPrerequisite(
            "model uses precomputed vectors; supply a vector file".into(),
        )),
        None => Ok(Box::new(HashingEncoder::new(cfg.clone())?)),
    }
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_file(path: &Path, what: &str) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path, what));
    }
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
