//! Candidate-versus-baseline comparison of two KPI reports.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{read_file, CliError};
use crate::kpi::KpiReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Tie,
    CandidateBetter,
    TradeOff,
    CandidateWorse,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Tie => "tie",
            Verdict::CandidateBetter => "candidate better",
            Verdict::TradeOff => "trade-off",
            Verdict::CandidateWorse => "candidate worse",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub field: &'static str,
    pub baseline: f64,
    pub candidate: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub baseline_version: String,
    pub candidate_version: String,
    pub deltas: Vec<Delta>,
    pub verdict: Verdict,
}

/// The candidate wins when it keeps recall at or above the baseline and the
/// specialist workload (`volume_union`) at or below it.
pub fn compare_reports(
    baseline: &KpiReport,
    candidate: &KpiReport,
) -> Result<Comparison, CliError> {
    if baseline.schema != candidate.schema {
        return Err(CliError::Validation(format!(
            "report schemas differ: {:?} vs {:?}",
            baseline.schema, candidate.schema
        )));
    }
    let fields: [(&'static str, fn(&KpiReport) -> f64); 8] = [
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("volume_union", |r| r.volume_union as f64),
        ("volume_model", |r| r.volume_model as f64),
        ("avg_std", |r| r.avg_std),
        ("threshold", |r| r.threshold),
        ("traffic_size", |r| r.traffic_size as f64),
        ("test_size", |r| r.test_size as f64),
    ];
    let deltas = fields
        .iter()
        .map(|(field, get)| Delta {
            field,
            baseline: get(baseline),
            candidate: get(candidate),
            delta: get(candidate) - get(baseline),
        })
        .collect();

    let recall = candidate.recall.total_cmp(&baseline.recall);
    let volume = candidate.volume_union.cmp(&baseline.volume_union);
    use std::cmp::Ordering::*;
    let verdict = match (recall, volume) {
        (Equal, Equal) => Verdict::Tie,
        (Greater | Equal, Less | Equal) => Verdict::CandidateBetter,
        (Less | Equal, Greater | Equal) => Verdict::CandidateWorse,
        _ => Verdict::TradeOff,
    };
    Ok(Comparison {
        baseline_version: baseline.model_version.clone(),
        candidate_version: candidate.model_version.clone(),
        deltas,
        verdict,
    })
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline  {}", self.baseline_version);
        let _ = writeln!(out, "candidate {}", self.candidate_version);
        let _ = writeln!(
            out,
            "{:<14} {:>12} {:>12} {:>12}",
            "field", "baseline", "candidate", "delta"
        );
        for d in &self.deltas {
            let fmt = |x: f64| {
                if d.field.starts_with("volume") || d.field.ends_with("size") {
                    format!("{x:.0}")
                } else {
                    format!("{x:.4}")
                }
            };
            let delta = if d.delta > 0.0 {
                format!("+{}", fmt(d.delta))
            } else {
                fmt(d.delta)
            };
            let _ = writeln!(
                out,
                "{:<14} {:>12} {:>12} {:>12}",
                d.field,
                fmt(d.baseline),
                fmt(d.candidate),
                delta
            );
        }
        let _ = writeln!(out, "verdict: {}", self.verdict);
        out
    }
}

pub fn cmd_compare(baseline: &Path, candidate: &Path) -> Result<Comparison, CliError> {
    let a = KpiReport::from_jsonl(&read_file(baseline, "baseline report")?)?;
    let b = KpiReport::from_jsonl(&read_file(candidate, "candidate report")?)?;
    compare_reports(&a, &b)
}
