use std::fmt;

use serde::{Deserialize, Serialize};

use super::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub size: usize,
    /// Mean whitespace-delimited token count; 0 for an empty dataset.
    pub avg_words: f64,
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let size = d.len();
    let words: usize = d.iter().map(|c| c.text.split_whitespace().count()).sum();
    let avg_words = if size == 0 {
        0.0
    } else {
        words as f64 / size as f64
    };
    DatasetStats { size, avg_words }
}

/// Compact count: `980`, `12.7K`, `281K`, `1.4M`.
pub fn format_count(n: usize) -> String {
    let (value, unit) = match n {
        0..=999 => return n.to_string(),
        1_000..=999_999 => (n as f64 / 1e3, "K"),
        _ => (n as f64 / 1e6, "M"),
    };
    let s = format!("{value:.1}");
    format!("{}{unit}", s.strip_suffix(".0").unwrap_or(&s))
}

/// Renders as a dataset-statistics table cell, e.g. `12.7K / 42.62`.
impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {:.2}", format_count(self.size), self.avg_words)
    }
}
