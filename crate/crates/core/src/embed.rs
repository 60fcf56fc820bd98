//! Text embeddings.
//!
//! The built-in encoder is a signed feature-hashing vectorizer over token
//! n-grams. Each n-gram (tokens joined by a single space) is hashed with
//! 64-bit FNV-1a, where the hash state first absorbs the little-endian bytes
//! of `hash_seed` and then the UTF-8 bytes of the n-gram. For a hash `h` the
//! bucket is `h % dim` and the sign is `+1` when `h / dim` is even, `-1`
//! otherwise. Bucket sums are L2-normalized.
//!
//! Vectors from an external encoder can be plugged in through
//! [`load_precomputed`] and [`PrecomputedEncoder`].

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Comment;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("vector {id:?} has length {found}, expected {expected}")]
    Dimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("vector {0:?} contains a non-finite value")]
    NonFinite(String),
    #[error("no precomputed vector for comment {0:?}")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Hashing,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EncoderKind::Hashing,
            dim: 256,
            ngram_min: 1,
            ngram_max: 2,
            hash_seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn with_dim(dim: usize) -> Self {
        EmbedderConfig {
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 2 {
            return Err(EmbedError::Config(format!(
                "dim must be >= 2, got {}",
                self.dim
            )));
        }
        if self.ngram_min < 1 || self.ngram_min > self.ngram_max {
            return Err(EmbedError::Config(format!(
                "need 1 <= ngram_min <= ngram_max, got {}..{}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= n);
        }
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngram_hash(seed: u64, ngram: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(ngram.as_bytes());
    h.finish()
}

pub fn embed_text(text: &str, cfg: &EmbedderConfig) -> EmbeddingVector {
    let tokens = tokenize(text);
    let dim = cfg.dim as u64;
    let mut v = EmbeddingVector::zeros(cfg.dim);
    for n in cfg.ngram_min..=cfg.ngram_max {
        for gram in tokens.windows(n) {
            let h = ngram_hash(cfg.hash_seed, &gram.join(" "));
            let sign = if (h / dim) % 2 == 0 { 1.0 } else { -1.0 };
            v.0[(h % dim) as usize] += sign;
        }
    }
    v.normalize();
    v
}

/// Maps comments to vectors. Implementations are immutable after
/// construction and safe to share across threads.
pub trait Encoder: Send + Sync {
    fn config(&self) -> &EmbedderConfig;

    fn encode(&self, comment: &Comment) -> Result<EmbeddingVector, EmbedError>;

    fn dim(&self) -> usize {
        self.config().dim
    }
}

#[derive(Debug, Clone)]
pub struct HashingEncoder {
    cfg: EmbedderConfig,
}

impl HashingEncoder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        Ok(HashingEncoder {
            cfg: EmbedderConfig {
                kind: EncoderKind::Hashing,
                ..cfg
            },
        })
    }
}

impl Encoder for HashingEncoder {
    fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    fn encode(&self, comment: &Comment) -> Result<EmbeddingVector, EmbedError> {
        Ok(embed_text(&comment.text, &self.cfg))
    }
}

/// Looks vectors up by comment id.
#[derive(Debug, Clone)]
pub struct PrecomputedEncoder {
    cfg: EmbedderConfig,
    vectors: BTreeMap<String, EmbeddingVector>,
}

impl PrecomputedEncoder {
    pub fn new(dim: usize, vectors: BTreeMap<String, EmbeddingVector>) -> Result<Self, EmbedError> {
        if let Some((id, v)) = vectors.iter().find(|(_, v)| v.dim() != dim) {
            return Err(EmbedError::Dimension {
                id: id.clone(),
                expected: dim,
                found: v.dim(),
            });
        }
        Ok(PrecomputedEncoder {
            cfg: EmbedderConfig {
                kind: EncoderKind::Precomputed,
                dim,
                ..EmbedderConfig::default()
            },
            vectors,
        })
    }
}

impl Encoder for PrecomputedEncoder {
    fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    fn encode(&self, comment: &Comment) -> Result<EmbeddingVector, EmbedError> {
        self.vectors
            .get(&comment.id)
            .cloned()
            .ok_or_else(|| EmbedError::Missing(comment.id.clone()))
    }
}

pub type EmbeddingMap = BTreeMap<String, EmbeddingVector>;

pub fn embed_batch<'a, I>(comments: I, encoder: &dyn Encoder) -> Result<EmbeddingMap, EmbedError>
where
    I: IntoIterator<Item = &'a Comment>,
{
    let comments: Vec<&Comment> = comments.into_iter().collect();
    let mut seen = std::collections::HashSet::with_capacity(comments.len());
    if let Some(dup) = comments.iter().find(|c| !seen.insert(c.id.as_str())) {
        return Err(EmbedError::DuplicateId(dup.id.clone()));
    }
    let vectors = comments
        .par_iter()
        .map(|c| encoder.encode(c).map(|v| (c.id.clone(), v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(vectors.into_iter().collect())
}

/// Reads `id<TAB>x1<TAB>...<TAB>x_dim` lines. Vectors whose norm is off unit
/// by more than 1e-6 are renormalized; zero vectors are kept as-is.
pub fn load_precomputed(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingMap, EmbedError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let malformed = |message: String| EmbedError::Malformed {
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        let values = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(format!("{id}: {e}")))?;
        if values.len() != dim {
            return Err(EmbedError::Dimension {
                id,
                expected: dim,
                found: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite(id));
        }
        let mut v = EmbeddingVector(values);
        let n = v.norm();
        if n > 0.0 && (n - 1.0).abs() > 1e-6 {
            v.normalize();
        }
        if out.insert(id.clone(), v).is_some() {
            return Err(EmbedError::DuplicateId(id));
        }
    }
    Ok(out)
}

/// Formats one vector line with 9 significant digits per value.
pub fn format_vector_line(id: &str, v: &EmbeddingVector) -> String {
    let mut line = id.to_string();
    for x in v.as_slice() {
        line.push('\t');
        line.push_str(&format!("{x:.8e}"));
    }
    line
}
