//! Noisy-negative mining.
//!
//! Every labeled positive gets a ball whose radius is `beta` times its
//! distance to the closest labeled negative. An unlabeled comment is mined as
//! a noisy negative when it lies strictly outside every ball.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label, Source};
use crate::embed::{EmbeddingMap, EmbeddingVector};

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error("no labeled negatives to measure radii against")]
    NoNegatives,
    #[error("no labeled positives; the ball union is undefined")]
    NoPositives,
    #[error("vector {id:?} has dimension {found}, expected {expected}")]
    Dimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("beta must lie in [0,1], got {0}")]
    Beta(f64),
    #[error("mined id {0:?} is not in the pool")]
    UnknownId(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// `1 - dot`; assumes unit-norm vectors.
    #[default]
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => 1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub beta: f64,
    pub metric: Metric,
    /// Upper bound on the number of mined comments; `None` keeps all.
    pub target_count: Option<usize>,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            beta: 0.5,
            metric: Metric::Cosine,
            target_count: None,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MineError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(MineError::Beta(self.beta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MinedSet {
    pub ids: BTreeSet<String>,
    pub radii: BTreeMap<String, f64>,
}

fn check_dims<'a>(
    maps: impl IntoIterator<Item = &'a EmbeddingMap>,
) -> Result<Option<usize>, MineError> {
    let mut expected = None;
    for (id, v) in maps.into_iter().flatten() {
        match expected {
            None => expected = Some(v.dim()),
            Some(d) if d != v.dim() => {
                return Err(MineError::Dimension {
                    id: id.clone(),
                    expected: d,
                    found: v.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(expected)
}

fn nearest(metric: Metric, x: &EmbeddingVector, others: &[&EmbeddingVector]) -> f64 {
    others
        .iter()
        .map(|o| metric.distance(x.as_slice(), o.as_slice()))
        .fold(f64::INFINITY, f64::min)
}

/// `r_i = beta * min_j d(p_i, n_j)` for every positive.
pub fn nearest_negative_radii(
    positives: &EmbeddingMap,
    negatives: &EmbeddingMap,
    cfg: &MiningConfig,
) -> Result<BTreeMap<String, f64>, MineError> {
    cfg.validate()?;
    if negatives.is_empty() {
        return Err(MineError::NoNegatives);
    }
    check_dims([positives, negatives])?;
    let negs: Vec<&EmbeddingVector> = negatives.values().collect();
    let radii: Vec<(String, f64)> = positives
        .par_iter()
        .map(|(id, p)| (id.clone(), cfg.beta * nearest(cfg.metric, p, &negs)))
        .collect();
    Ok(radii.into_iter().collect())
}

/// Selects every unlabeled point strictly outside all positive balls, then
/// subsamples to `target_count` if set.
pub fn mine_noisy_negatives(
    positives: &EmbeddingMap,
    negatives: &EmbeddingMap,
    unlabeled: &EmbeddingMap,
    cfg: &MiningConfig,
) -> Result<MinedSet, MineError> {
    if positives.is_empty() {
        return Err(MineError::NoPositives);
    }
    check_dims([positives, negatives, unlabeled])?;
    let radii = nearest_negative_radii(positives, negatives, cfg)?;
    let balls: Vec<(&EmbeddingVector, f64)> =
        positives.iter().map(|(id, p)| (p, radii[id])).collect();

    let selected: Vec<&String> = unlabeled
        .par_iter()
        .filter(|(_, u)| {
            balls
                .iter()
                .all(|(p, r)| cfg.metric.distance(u.as_slice(), p.as_slice()) > *r)
        })
        .map(|(id, _)| id)
        .collect();

    let ids: BTreeSet<String> = match cfg.target_count {
        Some(k) if selected.len() > k => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            index::sample(&mut rng, selected.len(), k)
                .into_iter()
                .map(|i| selected[i].clone())
                .collect()
        }
        _ => selected.into_iter().cloned().collect(),
    };
    Ok(MinedSet { ids, radii })
}

/// Copies the mined pool comments, labels them negative and marks them as
/// mined.
pub fn attach_mined_labels(
    labeled: &Dataset,
    pool: &Dataset,
    mined: &MinedSet,
) -> Result<Dataset, MineError> {
    let by_id: BTreeMap<&str, _> = pool.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut out = labeled.clone();
    for id in &mined.ids {
        let c = by_id
            .get(id.as_str())
            .ok_or_else(|| MineError::UnknownId(id.clone()))?;
        let mut m = (*c).clone();
        m.label = Some(Label::Negative);
        m.source = Source::Mined;
        out.comments.push(m);
    }
    out.name = format!("{}+nn", labeled.name);
    Ok(out)
}

/// Summary written next to the mined corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub beta: f64,
    pub metric: Metric,
    pub positives: usize,
    pub negatives: usize,
    pub unlabeled: usize,
    pub selected: usize,
    pub radius_min: f64,
    pub radius_median: f64,
    pub radius_max: f64,
}

impl MiningReport {
    pub fn new(
        cfg: &MiningConfig,
        positives: usize,
        negatives: usize,
        unlabeled: usize,
        mined: &MinedSet,
    ) -> Self {
        let mut r: Vec<f64> = mined.radii.values().copied().collect();
        r.sort_by(f64::total_cmp);
        let median = match r.len() {
            0 => 0.0,
            n if n % 2 == 1 => r[n / 2],
            n => 0.5 * (r[n / 2 - 1] + r[n / 2]),
        };
        MiningReport {
            beta: cfg.beta,
            metric: cfg.metric,
            positives,
            negatives,
            unlabeled,
            selected: mined.ids.len(),
            radius_min: r.first().copied().unwrap_or(0.0),
            radius_median: median,
            radius_max: r.last().copied().unwrap_or(0.0),
        }
    }
}
