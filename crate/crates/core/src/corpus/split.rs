use std::collections::HashSet;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Start of the held-out final window. Comments at or after it are test/traffic.
    #[serde(with = "super::timestamp")]
    pub test_cutoff: DateTime<Utc>,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dev_fraction() -> f64 {
    0.10
}

impl SplitSpec {
    pub fn new(test_cutoff: DateTime<Utc>, seed: u64) -> Self {
        SplitSpec {
            test_cutoff,
            dev_fraction: default_dev_fraction(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(CorpusError::Split(format!(
                "dev_fraction must lie strictly between 0 and 1, got {}",
                self.dev_fraction
            )));
        }
        Ok(())
    }

    /// Number of dev comments for `n` pre-cutoff labeled comments:
    /// round-half-up of `dev_fraction * n`, at least one.
    pub fn dev_count(&self, n: usize) -> usize {
        ((self.dev_fraction * n as f64 + 0.5).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub traffic: Dataset,
}

impl Splits {
    /// Test comments in their source language; translated fairness versions excluded.
    pub fn original_test(&self) -> impl Iterator<Item = &super::Comment> {
        self.test
            .comments
            .iter()
            .filter(|c| c.source != Source::Translated)
    }
}

/// Holds out everything at or after the cutoff as test/traffic and splits the
/// rest into train and dev with a seeded shuffle.
pub fn temporal_split(
    labeled: &Dataset,
    traffic: &Dataset,
    spec: &SplitSpec,
) -> Result<Splits, CorpusError> {
    spec.validate()?;
    if let Some(c) = labeled.iter().find(|c| c.label.is_none()) {
        return Err(CorpusError::Split(format!(
            "labeled comment {:?} carries no label",
            c.id
        )));
    }

    let (test, before): (Vec<_>, Vec<_>) = labeled
        .iter()
        .cloned()
        .partition(|c| c.timestamp >= spec.test_cutoff);
    if test.is_empty() {
        return Err(CorpusError::Split(
            "no labeled comments at or after the test cutoff".into(),
        ));
    }
    if before.len() < 2 {
        return Err(CorpusError::Split(format!(
            "{} labeled comments before the cutoff; train and dev both need at least one",
            before.len()
        )));
    }

    let mut order: Vec<usize> = (0..before.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let dev_n = spec.dev_count(before.len());
    let dev_idx: HashSet<usize> = order[..dev_n].iter().copied().collect();

    let (mut dev, mut train) = (Vec::new(), Vec::new());
    for (i, c) in before.into_iter().enumerate() {
        if dev_idx.contains(&i) {
            dev.push(c);
        } else {
            train.push(c);
        }
    }
    if train.is_empty() {
        return Err(CorpusError::Split("train split is empty".into()));
    }

    let traffic_window: Vec<_> = traffic
        .iter()
        .filter(|c| c.timestamp >= spec.test_cutoff)
        .cloned()
        .collect();
    let traffic_ids: HashSet<&str> = traffic_window.iter().map(|c| c.id.as_str()).collect();
    if let Some(missing) = test.iter().find(|c| !traffic_ids.contains(c.id.as_str())) {
        return Err(CorpusError::Split(format!(
            "test comment {:?} is not part of the traffic window",
            missing.id
        )));
    }

    let base = &labeled.name;
    Ok(Splits {
        train: Dataset::new(format!("{base}.train"), train),
        dev: Dataset::new(format!("{base}.dev"), dev),
        test: Dataset::new(format!("{base}.test"), test),
        traffic: Dataset::new(format!("{}.traffic", traffic.name), traffic_window),
    })
}
