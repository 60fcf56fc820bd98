//! Rare-event text triage.
//!
//! The pipeline embeds customer comments, mines noisy negatives from an
//! unlabeled pool, augments the labeled corpus with parallel translations,
//! trains a linear softmax head, calibrates its threshold for a target recall
//! and evaluates precision, recall, traffic volume and language fairness.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod embed;
pub mod kpi;
pub mod mine;
pub mod model;
