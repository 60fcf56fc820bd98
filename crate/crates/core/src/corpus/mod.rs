//! Comments, datasets and the JSONL corpus format.
//!
//! A corpus file holds one flat JSON object per line. Known fields are
//! `id`, `text`, `lang`, `label` (`"ps"` / `"not_ps"` / absent), `timestamp`
//! (ISO-8601 UTC, seconds precision), `fcc_escalated`, `source` and
//! `group_id`. Unknown fields survive a load/write round trip.

mod split;
mod stats;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

pub use split::{temporal_split, SplitSpec, Splits};
pub use stats::{dataset_stats, format_count, DatasetStats};
pub use synth::{generate_synthetic, SynthCorpus, SynthSpec};

/// The 18 market languages, dominant markets first.
pub const MARKET_LANGUAGES: [&str; 18] = [
    "de", "pl", "fr", "nl", "en", "it", "es", "sv", "da", "no", "fi", "cs", "sk", "et", "lv", "lt",
    "sl", "hr",
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record {id:?} has no label")]
    MissingLabel { line: usize, id: String },
    #[error("invalid comment {id:?}: {message}")]
    InvalidComment { id: String, message: String },
    #[error("split failed: {0}")]
    Split(String),
    #[error("invalid synthetic spec: {0}")]
    Synth(String),
}

/// Binary class of a comment. `Positive` is a product-safety case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "ps")]
    Positive,
    #[serde(rename = "not_ps")]
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Class index used by the classifier head: 0 = negative, 1 = positive.
    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Original,
    Translated,
    Mined,
}

/// Seconds-precision UTC timestamps written as `2021-06-01T00:00:00Z`.
pub mod timestamp {
    use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(D::Error::custom)
    }

    pub fn parse(raw: &str) -> Result<DateTime<Utc>, String> {
        DateTime::parse_from_rfc3339(raw)
            .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
            .map_err(|e| format!("invalid timestamp {raw:?}: {e}"))
    }
}

/// One customer claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub text: String,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub fcc_escalated: bool,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
    #[serde(default, flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Comment {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: impl Into<String>) -> Self {
        Comment {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
            label: None,
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            fcc_escalated: false,
            source: Source::Original,
            group_id: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_timestamp(mut self, timestamp: DateTime<Utc>) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// Key shared by all language versions of one parallel comment.
    pub fn group_key(&self) -> &str {
        self.group_id.as_deref().unwrap_or(&self.id)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: &str| CorpusError::InvalidComment {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.source == Source::Translated && self.group_id.is_none() {
            return Err(invalid("translated comment without group_id"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub comments: Vec<Comment>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, comments: Vec<Comment>) -> Self {
        Dataset {
            name: name.into(),
            comments,
        }
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Comment> {
        self.comments.iter()
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.comments.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Comment> {
        self.comments.iter().find(|c| c.id == id)
    }

    /// Checks per-comment invariants and id uniqueness.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::with_capacity(self.comments.len());
        for (i, c) in self.comments.iter().enumerate() {
            c.validate()?;
            if !seen.insert(c.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: c.id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        self.comments
            .iter()
            .filter(|c| c.label == Some(Label::Positive))
            .count()
    }
}

/// Parses one corpus per line from any reader.
pub fn read_corpus<R: BufRead>(
    reader: R,
    name: &str,
    expect_labels: bool,
) -> Result<Dataset, CorpusError> {
    let mut comments = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let comment: Comment = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        comment.validate().map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(comment.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: comment.id,
            });
        }
        if expect_labels && comment.label.is_none() {
            return Err(CorpusError::MissingLabel {
                line: line_no,
                id: comment.id,
            });
        }
        comments.push(comment);
    }
    Ok(Dataset::new(name, comments))
}

pub fn load_corpus(path: impl AsRef<Path>, expect_labels: bool) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_corpus(BufReader::new(file), &name, expect_labels)
}

/// Serializes a dataset to JSONL bytes, one comment per line.
pub fn corpus_to_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    for c in &dataset.comments {
        // Comment has no map keys that could fail to serialize.
        out.push_str(&serde_json::to_string(c).expect("comment serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(corpus_to_string(dataset).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err)
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
