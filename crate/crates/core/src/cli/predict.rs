//! Batch prediction with an append-only, version-linked log.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{build_encoder, CliError};
use crate::corpus::{load_corpus, timestamp};
use crate::kpi::ScoredComment;
use crate::model::{load_artifact, ModelArtifact};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub comment_id: String,
    pub model_version: String,
    #[serde(with = "timestamp")]
    pub predicted_at: DateTime<Utc>,
    pub score: f64,
    pub decision: bool,
    pub threshold: f64,
}

/// A model path may name an artifact file or an output directory whose
/// `models/current.txt` points at the calibrated artifact.
fn resolve_model(path: &Path) -> Result<PathBuf, CliError> {
    if !path.exists() {
        return Err(CliError::missing(path, "model artifact"));
    }
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let pointer = path.join("models").join("current.txt");
    let version = super::read_file(&pointer, "current model pointer (run calibrate)")?;
    Ok(path
        .join("models")
        .join(format!("model-{}.json", version.trim())))
}

fn load_model(path: &Path) -> Result<ModelArtifact, CliError> {
    let path = resolve_model(path)?;
    if !path.exists() {
        return Err(CliError::missing(&path, "model artifact"));
    }
    Ok(load_artifact(&path)?)
}

/// Scores every comment of `corpus` and appends one record per comment to
/// `log` in a single write. An empty corpus leaves the log untouched.
pub fn cmd_predict(
    model: &Path,
    corpus: &Path,
    log: &Path,
    predicted_at: DateTime<Utc>,
    vectors: Option<&Path>,
) -> Result<Vec<PredictionRecord>, CliError> {
    let artifact = load_model(model)?;
    let threshold = artifact.threshold.ok_or_else(|| {
        CliError::MissingPrerequisite(format!(
            "model {} has no calibrated threshold",
            artifact.version
        ))
    })?;
    if !corpus.exists() {
        return Err(CliError::missing(corpus, "corpus"));
    }
    let comments = load_corpus(corpus, false)?;
    if comments.is_empty() {
        return Ok(Vec::new());
    }
    let encoder = build_encoder(&artifact.embedder_config, vectors)?;
    let scored = crate::kpi::score_dataset(&artifact, &comments, encoder.as_ref())?;
    let records: Vec<PredictionRecord> = scored
        .into_iter()
        .map(|ScoredComment { id, score, .. }| PredictionRecord {
            comment_id: id,
            model_version: artifact.version.clone(),
            predicted_at,
            score,
            decision: score >= threshold,
            threshold,
        })
        .collect();

    let mut batch = String::new();
    for r in &records {
        batch.push_str(&serde_json::to_string(r).expect("record serializes"));
        batch.push('\n');
    }
    if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(log)
        .map_err(|e| CliError::io(log, e))?;
    file.write_all(batch.as_bytes())
        .and_then(|_| file.sync_data())
        .map_err(|e| CliError::io(log, e))?;
    Ok(records)
}

pub fn read_log(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let text = super::read_file(path, "prediction log")?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Checks that every logged prediction links to a stored artifact of the
/// same version and agrees with that artifact's threshold. Returns the
/// number of records checked.
pub fn verify_log(log: &Path, models: &Path) -> Result<usize, CliError> {
    let records = read_log(log)?;
    let mut artifacts: BTreeMap<String, ModelArtifact> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if !artifacts.contains_key(&r.model_version) {
            let path = models.join(format!("model-{}.json", r.model_version));
            if !path.exists() {
                return Err(CliError::Validation(format!(
                    "line {line}: no artifact for model version {}",
                    r.model_version
                )));
            }
            let a = load_artifact(&path)?;
            if a.version != r.model_version {
                return Err(CliError::Validation(format!(
                    "line {line}: {} holds version {}",
                    path.display(),
                    a.version
                )));
            }
            artifacts.insert(r.model_version.clone(), a);
        }
        let a = &artifacts[&r.model_version];
        if a.threshold != Some(r.threshold) {
            return Err(CliError::Validation(format!(
                "line {line}: threshold {} differs from model {}",
                r.threshold, a.version
            )));
        }
        if !(0.0..=1.0).contains(&r.score) || r.decision != (r.score >= r.threshold) {
            return Err(CliError::Validation(format!(
                "line {line}: decision inconsistent with score {}",
                r.score
            )));
        }
    }
    Ok(records.len())
}
