//! Versioned model artifacts.
//!
//! An artifact file is a JSON object with explicit field tags. Weights and
//! bias are stored as hex of little-endian 64-bit floats, row-major. The
//! `content_hash` covers the model content (head, threshold, embedder config,
//! training dataset name) and feeds the version string
//! `v<YYYYMMDDTHHMMSSZ>-<first 12 hex of content_hash>`. The `checksum` covers
//! every other field of the file, so any edited byte is detected on load.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LinearHead, ModelError, Probabilities};
use crate::corpus::{timestamp, Comment};
use crate::embed::{EmbedderConfig, Encoder};

pub const ARTIFACT_FORMAT: &str = "safety-triage-model/1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub head: LinearHead,
    pub threshold: Option<f64>,
    pub embedder_config: EmbedderConfig,
    pub version: String,
    pub created_at: DateTime<Utc>,
    pub training_dataset_name: String,
}

#[derive(Serialize)]
struct Content<'a> {
    head: HeadRecord,
    threshold: Option<f64>,
    embedder_config: &'a EmbedderConfig,
    training_dataset_name: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeadRecord {
    dim: usize,
    rows: usize,
    weights_f64le: String,
    bias_f64le: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactFile {
    format: String,
    version: String,
    #[serde(with = "timestamp")]
    created_at: DateTime<Utc>,
    training_dataset_name: String,
    embedder_config: EmbedderConfig,
    threshold: Option<f64>,
    head: HeadRecord,
    content_hash: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    checksum: String,
}

fn encode_f64s(xs: &[f64]) -> String {
    let bytes: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
    hex::encode(bytes)
}

fn decode_f64s(s: &str) -> Result<Vec<f64>, ModelError> {
    let bytes = hex::decode(s).map_err(|e| ModelError::Corrupt(format!("bad hex: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(ModelError::Corrupt(
            "float block not a multiple of 8 bytes".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn head_record(head: &LinearHead) -> HeadRecord {
    HeadRecord {
        dim: head.dim,
        rows: 2,
        weights_f64le: encode_f64s(&head.weights),
        bias_f64le: encode_f64s(&head.bias),
    }
}

impl ModelArtifact {
    pub fn new(
        head: LinearHead,
        threshold: Option<f64>,
        embedder_config: EmbedderConfig,
        created_at: DateTime<Utc>,
        training_dataset_name: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let mut a = ModelArtifact {
            head,
            threshold,
            embedder_config,
            version: String::new(),
            created_at,
            training_dataset_name: training_dataset_name.into(),
        };
        a.validate()?;
        a.version = a.compute_version();
        Ok(a)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.head.is_finite() {
            return Err(ModelError::NonFinite("head parameters".into()));
        }
        if self.head.weights.len() != 2 * self.head.dim {
            return Err(ModelError::Shape(format!(
                "{} weights for dim {}",
                self.head.weights.len(),
                self.head.dim
            )));
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ModelError::Threshold(t));
            }
        }
        Ok(())
    }

    /// Same model with a calibrated threshold and a fresh version.
    pub fn with_threshold(
        &self,
        threshold: f64,
        created_at: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        ModelArtifact::new(
            self.head.clone(),
            Some(threshold),
            self.embedder_config.clone(),
            created_at,
            self.training_dataset_name.clone(),
        )
    }

    pub fn content_hash(&self) -> String {
        let content = Content {
            head: head_record(&self.head),
            threshold: self.threshold,
            embedder_config: &self.embedder_config,
            training_dataset_name: &self.training_dataset_name,
        };
        sha256_hex(&serde_json::to_vec(&content).expect("content serializes"))
    }

    fn compute_version(&self) -> String {
        format!(
            "v{}-{}",
            self.created_at.format("%Y%m%dT%H%M%SZ"),
            &self.content_hash()[..12]
        )
    }

    pub fn file_name(&self) -> String {
        format!("model-{}.json", self.version)
    }

    pub fn score_vector(
        &self,
        x: &crate::embed::EmbeddingVector,
    ) -> Result<Probabilities, ModelError> {
        self.head.forward(x)
    }

    /// Positive-class probability of a comment.
    pub fn score(&self, comment: &Comment, encoder: &dyn Encoder) -> Result<f64, ModelError> {
        let x = encoder.encode(comment)?;
        Ok(self.head.forward(&x)?.positive)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut file = ArtifactFile {
            format: ARTIFACT_FORMAT.to_string(),
            version: self.version.clone(),
            created_at: self.created_at,
            training_dataset_name: self.training_dataset_name.clone(),
            embedder_config: self.embedder_config.clone(),
            threshold: self.threshold,
            head: head_record(&self.head),
            content_hash: self.content_hash(),
            checksum: String::new(),
        };
        file.checksum = sha256_hex(&serde_json::to_vec(&file).expect("artifact serializes"));
        let mut out = serde_json::to_vec_pretty(&file).expect("artifact serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut file: ArtifactFile = serde_json::from_slice(bytes)
            .map_err(|e| ModelError::Corrupt(format!("unreadable artifact: {e}")))?;
        if file.format != ARTIFACT_FORMAT {
            return Err(ModelError::Corrupt(format!(
                "unknown format {:?}",
                file.format
            )));
        }
        let stored = std::mem::take(&mut file.checksum);
        let actual = sha256_hex(&serde_json::to_vec(&file).expect("artifact serializes"));
        if stored != actual {
            return Err(ModelError::Corrupt(format!(
                "checksum mismatch: stored {stored}, computed {actual}"
            )));
        }
        if file.head.rows != 2 {
            return Err(ModelError::Corrupt(format!("{} rows", file.head.rows)));
        }
        let weights = decode_f64s(&file.head.weights_f64le)?;
        let bias = decode_f64s(&file.head.bias_f64le)?;
        if weights.len() != 2 * file.head.dim || bias.len() != 2 {
            return Err(ModelError::Corrupt("head shape does not match dim".into()));
        }
        let artifact = ModelArtifact::new(
            LinearHead {
                dim: file.head.dim,
                weights,
                bias: [bias[0], bias[1]],
            },
            file.threshold,
            file.embedder_config,
            file.created_at,
            file.training_dataset_name,
        )?;
        if artifact.version != file.version || artifact.content_hash() != file.content_hash {
            return Err(ModelError::Corrupt(format!(
                "version {} does not match content (expected {})",
                file.version, artifact.version
            )));
        }
        Ok(artifact)
    }
}

/// Writes `model-<version>.json` into `dir`. Re-saving identical bytes is a
/// no-op; a different file under the same name is an error.
pub fn save_artifact(a: &ModelArtifact, dir: impl AsRef<Path>) -> Result<PathBuf, ModelError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ModelError::Io(dir.display().to_string(), e))?;
    let path = dir.join(a.file_name());
    let bytes = a.to_bytes();
    if path.exists() {
        let existing =
            fs::read(&path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
        if existing == bytes {
            return Ok(path);
        }
        return Err(ModelError::VersionCollision(a.version.clone()));
    }
    fs::write(&path, bytes).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
    Ok(path)
}

pub fn load_artifact(path: impl AsRef<Path>) -> Result<ModelArtifact, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
    ModelArtifact::from_bytes(&bytes)
}
