//! Recall-constrained threshold calibration and KPI computation.
//!
//! A comment is flagged when its positive-class score is `>= threshold`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Comment, Dataset, Label, Source, Splits};
use crate::embed::Encoder;
use crate::model::{ModelArtifact, ModelError};

pub const REPORT_SCHEMA: &str = "kpi-report/1";
pub const DEFAULT_TARGET_RECALL: f64 = 0.95;

#[derive(Debug, thiserror::Error)]
pub enum KpiError {
    #[error("no labeled positives; recall is undefined")]
    NoPositives,
    #[error("target recall must lie in (0,1], got {0}")]
    TargetRecall(f64),
    #[error("score {score} of {id:?} is outside [0,1]")]
    Score { id: String, score: f64 },
    #[error("no comments to evaluate")]
    Empty,
    #[error("model {0} has no calibrated threshold")]
    ThresholdUnset(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredComment {
    pub id: String,
    pub score: f64,
    pub label: Option<Label>,
    pub fcc_escalated: bool,
    pub lang: String,
    pub group_id: String,
}

impl ScoredComment {
    pub fn new(comment: &Comment, score: f64) -> Result<Self, KpiError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(KpiError::Score {
                id: comment.id.clone(),
                score,
            });
        }
        Ok(ScoredComment {
            id: comment.id.clone(),
            score,
            label: comment.label,
            fcc_escalated: comment.fcc_escalated,
            lang: comment.lang.clone(),
            group_id: comment.group_key().to_string(),
        })
    }

    fn flagged(&self, threshold: f64) -> bool {
        self.score >= threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub achieved_dev_recall: f64,
    pub target_recall: f64,
    pub positives: usize,
}

fn positive_scores(items: &[ScoredComment]) -> Vec<f64> {
    items
        .iter()
        .filter(|c| c.label == Some(Label::Positive))
        .map(|c| c.score)
        .collect()
}

/// Largest observed positive score whose recall reaches `target_recall`:
/// the k-th largest positive score with `k = ceil(target * P)`.
pub fn calibrate_threshold(
    dev: &[ScoredComment],
    target_recall: f64,
) -> Result<CalibrationResult, KpiError> {
    if !(target_recall > 0.0 && target_recall <= 1.0) {
        return Err(KpiError::TargetRecall(target_recall));
    }
    let mut scores = positive_scores(dev);
    if scores.is_empty() {
        return Err(KpiError::NoPositives);
    }
    scores.sort_by(|a, b| b.total_cmp(a));
    let p = scores.len();
    let reaches = |k: usize| k as f64 / p as f64 >= target_recall;
    // Start from ceil(target * P) and correct for rounding in the product.
    let mut k = ((target_recall * p as f64).ceil() as usize).clamp(1, p);
    while k > 1 && reaches(k - 1) {
        k -= 1;
    }
    while k < p && !reaches(k) {
        k += 1;
    }
    let threshold = scores[k - 1];
    let tp = scores.iter().filter(|&&s| s >= threshold).count();
    Ok(CalibrationResult {
        threshold,
        achieved_dev_recall: tp as f64 / p as f64,
        target_recall,
        positives: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Nothing was flagged; precision is reported as 1.0.
    pub no_predictions: bool,
}

impl PrecisionRecall {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Result<Self, KpiError> {
        if tp + fn_ == 0 {
            return Err(KpiError::NoPositives);
        }
        let no_predictions = tp + fp == 0;
        Ok(PrecisionRecall {
            precision: if no_predictions {
                1.0
            } else {
                tp as f64 / (tp + fp) as f64
            },
            recall: tp as f64 / (tp + fn_) as f64,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            no_predictions,
        })
    }
}

/// Precision and recall over the labeled items of `test`.
pub fn precision_recall<'a, I>(test: I, threshold: f64) -> Result<PrecisionRecall, KpiError>
where
    I: IntoIterator<Item = &'a ScoredComment>,
{
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in test {
        match (c.label, c.flagged(threshold)) {
            (Some(Label::Positive), true) => tp += 1,
            (Some(Label::Positive), false) => fn_ += 1,
            (Some(Label::Negative), true) => fp += 1,
            _ => {}
        }
    }
    PrecisionRecall::from_counts(tp, fp, fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficVolume {
    /// Flagged by the model or escalated by front-line agents.
    pub union: usize,
    pub model: usize,
}

pub fn traffic_volume(traffic: &[ScoredComment], threshold: f64) -> TrafficVolume {
    let model = traffic.iter().filter(|c| c.flagged(threshold)).count();
    let union = traffic
        .iter()
        .filter(|c| c.flagged(threshold) || c.fcc_escalated)
        .count();
    TrafficVolume { union, model }
}

/// Population standard deviation; exactly 0 for constant input.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Mean over groups of the spread of scores across language versions.
pub fn language_fairness(groups: &BTreeMap<String, Vec<ScoredComment>>) -> Result<f64, KpiError> {
    if groups.is_empty() || groups.values().all(Vec::is_empty) {
        return Err(KpiError::Empty);
    }
    let stds: Vec<f64> = groups
        .values()
        .filter(|g| !g.is_empty())
        .map(|g| population_std(&g.iter().map(|c| c.score).collect::<Vec<_>>()))
        .collect();
    Ok(stds.iter().sum::<f64>() / stds.len() as f64)
}

pub fn group_by_comment<'a, I>(items: I) -> BTreeMap<String, Vec<ScoredComment>>
where
    I: IntoIterator<Item = &'a ScoredComment>,
{
    let mut groups: BTreeMap<String, Vec<ScoredComment>> = BTreeMap::new();
    for c in items {
        groups
            .entry(c.group_id.clone())
            .or_default()
            .push(c.clone());
    }
    groups
}

/// Scores every comment, in input order.
pub fn score_dataset(
    model: &ModelArtifact,
    d: &Dataset,
    encoder: &dyn Encoder,
) -> Result<Vec<ScoredComment>, KpiError> {
    d.comments
        .par_iter()
        .map(|c| ScoredComment::new(c, model.score(c, encoder)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageKpi {
    pub lang: String,
    pub count: usize,
    pub precision: f64,
    /// `None` when the language has no labeled positives.
    pub recall: Option<f64>,
    pub no_predictions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub schema: String,
    pub model_version: String,
    pub training_dataset_name: String,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub no_predictions: bool,
    pub volume_union: usize,
    pub volume_model: usize,
    pub traffic_size: usize,
    pub test_size: usize,
    pub avg_std: f64,
    pub per_language: Vec<LanguageKpi>,
}

/// Scores test and traffic with a calibrated model. Precision and recall use
/// source-language test comments only; language fairness uses every test
/// version grouped by `group_id`.
pub fn kpi_report(
    model: &ModelArtifact,
    splits: &Splits,
    encoder: &dyn Encoder,
) -> Result<KpiReport, KpiError> {
    let threshold = model
        .threshold
        .ok_or_else(|| KpiError::ThresholdUnset(model.version.clone()))?;
    let test = score_dataset(model, &splits.test, encoder)?;
    let traffic = score_dataset(model, &splits.traffic, encoder)?;
    let original: Vec<&ScoredComment> = test
        .iter()
        .zip(&splits.test.comments)
        .filter(|(_, c)| c.source != Source::Translated)
        .map(|(s, _)| s)
        .collect();

    let pr = precision_recall(original.iter().copied(), threshold)?;
    let volume = traffic_volume(&traffic, threshold);
    let avg_std = language_fairness(&group_by_comment(&test))?;

    let mut by_lang: BTreeMap<&str, Vec<&ScoredComment>> = BTreeMap::new();
    for s in &original {
        by_lang.entry(s.lang.as_str()).or_default().push(s);
    }
    let per_language = by_lang
        .into_iter()
        .map(|(lang, items)| {
            let (recall, precision, no_predictions) =
                match precision_recall(items.iter().copied(), threshold) {
                    Ok(pr) => (Some(pr.recall), pr.precision, pr.no_predictions),
                    Err(_) => {
                        let fp = items.iter().filter(|c| c.flagged(threshold)).count();
                        (None, if fp == 0 { 1.0 } else { 0.0 }, fp == 0)
                    }
                };
            LanguageKpi {
                lang: lang.to_string(),
                count: items.len(),
                precision,
                recall,
                no_predictions,
            }
        })
        .collect();

    Ok(KpiReport {
        schema: REPORT_SCHEMA.to_string(),
        model_version: model.version.clone(),
        training_dataset_name: model.training_dataset_name.clone(),
        threshold,
        precision: pr.precision,
        recall: pr.recall,
        no_predictions: pr.no_predictions,
        volume_union: volume.union,
        volume_model: volume.model,
        traffic_size: traffic.len(),
        test_size: original.len(),
        avg_std,
        per_language,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum ReportLine {
    Summary(Box<KpiReport>),
    Language(LanguageKpi),
}

impl KpiReport {
    /// Machine-readable form: a summary line followed by one line per language.
    pub fn to_jsonl(&self) -> String {
        let mut summary = self.clone();
        let languages = std::mem::take(&mut summary.per_language);
        let mut out = serde_json::to_string(&ReportLine::Summary(Box::new(summary)))
            .expect("report serializes");
        out.push('\n');
        for l in languages {
            out.push_str(&serde_json::to_string(&ReportLine::Language(l)).expect("serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, KpiError> {
        let mut report: Option<KpiReport> = None;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let parsed: ReportLine = serde_json::from_str(line)
                .map_err(|e| KpiError::Report(format!("line {}: {e}", i + 1)))?;
            match (parsed, report.as_mut()) {
                (ReportLine::Summary(s), None) => report = Some(*s),
                (ReportLine::Summary(_), Some(_)) => {
                    return Err(KpiError::Report("more than one summary record".into()))
                }
                (ReportLine::Language(l), Some(r)) => r.per_language.push(l),
                (ReportLine::Language(_), None) => {
                    return Err(KpiError::Report("language record before summary".into()))
                }
            }
        }
        let report = report.ok_or_else(|| KpiError::Report("no summary record".into()))?;
        if report.schema != REPORT_SCHEMA {
            return Err(KpiError::Report(format!(
                "schema {:?}, expected {REPORT_SCHEMA:?}",
                report.schema
            )));
        }
        Ok(report)
    }

    /// One row of the KPI table: rates to 2 decimals, volumes as integers.
    pub fn table_row(&self, name: &str) -> String {
        format_row(
            name,
            self.precision,
            self.recall,
            self.volume_union,
            self.volume_model,
            self.avg_std,
        )
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {}  threshold {:.4}",
            self.model_version, self.threshold
        );
        let _ = writeln!(out, "{}", table_header());
        let _ = writeln!(out, "{}", self.table_row(&self.training_dataset_name));
        if self.no_predictions {
            let _ = writeln!(
                out,
                "note: no test comment was flagged; precision reported as 1.00"
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>9} {:>6}",
            "language", "count", "precision", "recall"
        );
        for l in &self.per_language {
            let recall = l
                .recall
                .map_or_else(|| "-".to_string(), |r| format!("{r:.2}"));
            let _ = writeln!(
                out,
                "{:<10} {:>6} {:>9.2} {:>6}",
                l.lang, l.count, l.precision, recall
            );
        }
        out
    }
}

pub fn table_header() -> String {
    format!(
        "{:<24} {:>9} {:>6} {:>18} {:>12} {:>9}",
        "training dataset", "precision", "recall", "volume model|fcc", "volume model", "avg std"
    )
}

pub fn format_row(
    name: &str,
    precision: f64,
    recall: f64,
    volume_union: usize,
    volume_model: usize,
    avg_std: f64,
) -> String {
    format!(
        "{name:<24} {precision:>9.2} {recall:>6.2} {volume_union:>18} {volume_model:>12} {avg_std:>9.2}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(id: &str, score: f64, label: Option<Label>) -> ScoredComment {
        ScoredComment {
            id: id.into(),
            score,
            label,
            fcc_escalated: false,
            lang: "de".into(),
            group_id: id.into(),
        }
    }

    fn positives(scores: &[f64]) -> Vec<ScoredComment> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| sc(&format!("p{i}"), s, Some(Label::Positive)))
            .collect()
    }

    #[test]
    fn calibration_examples() {
        let r = calibrate_threshold(&positives(&[0.9, 0.8, 0.3]), 0.95).unwrap();
        assert_eq!(r.threshold, 0.3);
        assert_eq!(r.achieved_dev_recall, 1.0);

        let r = calibrate_threshold(&positives(&[0.2, 0.9, 0.5]), 1.0).unwrap();
        assert_eq!(r.threshold, 0.2);

        let r = calibrate_threshold(&positives(&[0.7; 5]), 0.95).unwrap();
        assert_eq!((r.threshold, r.achieved_dev_recall), (0.7, 1.0));
    }

    #[test]
    fn calibration_with_twenty_positives_keeps_one_out() {
        let scores: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let r = calibrate_threshold(&positives(&scores), 0.95).unwrap();
        assert_eq!(r.threshold, 0.1);
        assert_eq!(r.achieved_dev_recall, 0.95);
    }

    #[test]
    fn calibration_ignores_negatives_and_needs_positives() {
        let mut dev = positives(&[0.6]);
        dev.push(sc("n", 0.99, Some(Label::Negative)));
        assert_eq!(calibrate_threshold(&dev, 0.95).unwrap().threshold, 0.6);
        let only_neg = vec![sc("n", 0.5, Some(Label::Negative))];
        assert!(matches!(
            calibrate_threshold(&only_neg, 0.95),
            Err(KpiError::NoPositives)
        ));
        assert!(calibrate_threshold(&dev, 0.0).is_err());
    }

    #[test]
    fn confusion_counts() {
        use Label::*;
        let test = vec![
            sc("a", 0.9, Some(Positive)),
            sc("b", 0.8, Some(Negative)),
            sc("c", 0.7, Some(Positive)),
            sc("d", 0.4, Some(Positive)),
        ];
        let pr = precision_recall(&test, 0.4).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.75, 1.0));
        assert_eq!(precision_recall(&test, 0.0).unwrap().recall, 1.0);

        let none = precision_recall(&test, 0.95).unwrap();
        assert!(none.no_predictions);
        assert_eq!((none.precision, none.recall), (1.0, 0.0));

        let neg = vec![sc("n", 0.1, Some(Negative))];
        assert!(matches!(
            precision_recall(&neg, 0.5),
            Err(KpiError::NoPositives)
        ));
    }

    #[test]
    fn table_row_two_decimals() {
        let pr = PrecisionRecall::from_counts(92, 54, 8).unwrap();
        let row = format_row("Original+NN+PC", pr.precision, pr.recall, 2782, 2714, 0.12);
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(
            cols,
            ["Original+NN+PC", "0.63", "0.92", "2782", "2714", "0.12"]
        );
    }

    #[test]
    fn volumes() {
        let quiet: Vec<_> = (0..5).map(|i| sc(&i.to_string(), 0.1, None)).collect();
        assert_eq!(
            traffic_volume(&quiet, 0.5),
            TrafficVolume { union: 0, model: 0 }
        );

        let mut t: Vec<_> = (0..10).map(|i| sc(&i.to_string(), 0.1, None)).collect();
        for c in &mut t[..4] {
            c.score = 0.9;
        }
        t[4].fcc_escalated = true;
        t[5].fcc_escalated = true;
        t[0].fcc_escalated = true;
        assert_eq!(
            traffic_volume(&t, 0.5),
            TrafficVolume { union: 6, model: 4 }
        );
    }

    #[test]
    fn fairness() {
        let mut groups = BTreeMap::new();
        groups.insert(
            "g".to_string(),
            vec![sc("a", 0.2, None), sc("b", 0.4, None)],
        );
        assert!((language_fairness(&groups).unwrap() - 0.1).abs() < 1e-15);

        groups.insert("h".to_string(), vec![sc("c", 0.1, None); 3]);
        groups.insert("i".to_string(), vec![sc("d", 0.7, None)]);
        assert!((language_fairness(&groups).unwrap() - 0.1 / 3.0).abs() < 1e-15);

        let constant: BTreeMap<_, _> = [("g".to_string(), vec![sc("a", 0.1, None); 3])].into();
        assert_eq!(language_fairness(&constant).unwrap(), 0.0);
        assert!(language_fairness(&BTreeMap::new()).is_err());
    }

    #[test]
    fn report_jsonl_round_trip_and_schema_check() {
        let r = KpiReport {
            schema: REPORT_SCHEMA.into(),
            model_version: "v1".into(),
            training_dataset_name: "x".into(),
            threshold: 0.25,
            precision: 0.5,
            recall: 0.75,
            no_predictions: false,
            volume_union: 10,
            volume_model: 8,
            traffic_size: 100,
            test_size: 12,
            avg_std: 0.1,
            per_language: vec![LanguageKpi {
                lang: "de".into(),
                count: 12,
                precision: 0.5,
                recall: None,
                no_predictions: false,
            }],
        };
        assert_eq!(KpiReport::from_jsonl(&r.to_jsonl()).unwrap(), r);
        let bad = r.to_jsonl().replace(REPORT_SCHEMA, "kpi-report/0");
        assert!(KpiReport::from_jsonl(&bad).is_err());
        assert!(r.to_table().contains("0.75"));
    }
}
