//! Seeded synthetic corpora that reproduce the shape of the triage problem at
//! desk scale: an escalated, labeled set with a high positive prior, a large
//! unlabeled pool and a traffic window with a rare positive class.
//!
//! Three kinds of comment are generated. Positives mix safety vocabulary with
//! everyday context words. Escalated negatives (the only negatives that reach
//! the labeled set) use quality-complaint vocabulary. Everyday negatives, which
//! dominate the pool and traffic, use their own vocabulary plus context words.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{timestamp, Comment, CorpusError, Dataset, Label, Source};
use crate::augment::default_suffix;

const POSITIVE_WORDS: &[&str] = &[
    "rash",
    "redness",
    "itching",
    "irritation",
    "pimples",
    "burning",
    "swollen",
    "breath",
    "allergic",
    "eczema",
    "hives",
    "petrol",
    "gasoline",
    "diesel",
    "sulphur",
    "chlorine",
    "chemical",
    "fumes",
    "toxic",
    "dizzy",
    "headache",
    "nail",
    "needle",
    "pin",
    "metal",
    "sharp",
    "edge",
    "cut",
    "bleeding",
    "slippery",
    "fell",
    "snapped",
];

const ESCALATED_NEGATIVE_WORDS: &[&str] = &[
    "perfume",
    "sweat",
    "cigarette",
    "smoke",
    "torn",
    "label",
    "worn",
    "stain",
    "stains",
    "crease",
    "creases",
    "scratches",
    "faded",
    "loose",
    "thread",
    "seam",
    "zipper",
    "button",
    "missing",
    "dirty",
    "used",
    "hole",
    "glue",
    "stitching",
    "discoloured",
    "peeling",
    "musty",
    "pilling",
    "blisters",
    "wrinkled",
];

const EVERYDAY_NEGATIVE_WORDS: &[&str] = &[
    "size",
    "small",
    "large",
    "tight",
    "fit",
    "colour",
    "different",
    "picture",
    "expected",
    "late",
    "delivery",
    "parcel",
    "refund",
    "exchange",
    "wrong",
    "ordered",
    "long",
    "short",
    "narrow",
    "wide",
    "quality",
    "cheap",
    "material",
    "style",
    "return",
    "returned",
    "package",
    "arrived",
    "instead",
    "bigger",
    "smaller",
    "length",
    "sleeves",
    "waist",
    "photo",
    "shade",
    "courier",
    "invoice",
    "voucher",
    "bought",
];

const CONTEXT_WORDS: &[&str] = &[
    "after", "wearing", "wore", "first", "day", "days", "shoes", "dress", "shirt", "jacket",
    "boots", "trousers", "my", "the", "when", "feet", "skin", "hours", "time", "put", "them", "it",
    "was", "very", "on", "and", "this", "with", "from", "once",
];

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Total labeled comments, including those in the held-out final window.
    pub n_train_labeled: usize,
    pub n_unlabeled_pool: usize,
    pub n_traffic: usize,
    pub train_positive_prior: f64,
    pub traffic_positive_prior: f64,
    pub languages: Vec<String>,
    /// Share of comments written in the first language; the rest is spread
    /// evenly over the others.
    pub primary_language_share: f64,
    pub vocab_positive: Vec<String>,
    /// Quality-complaint vocabulary of escalated negatives.
    pub vocab_negative: Vec<String>,
    /// Everyday-complaint vocabulary of traffic negatives. Counts as negative
    /// inventory together with `vocab_negative`.
    pub vocab_everyday: Vec<String>,
    /// Neutral words, not part of either inventory.
    pub vocab_context: Vec<String>,
    pub noise_rate: f64,
    /// Share of pool/traffic negatives that look like escalated ones.
    pub escalated_negative_rate: f64,
    /// Share of non-test traffic positives escalated by front-line agents.
    pub fcc_positive_rate: f64,
    /// Share of labeled comments (per class) dated in the final window.
    pub test_fraction: f64,
    #[serde(with = "timestamp")]
    pub start: DateTime<Utc>,
    #[serde(with = "timestamp")]
    pub test_cutoff: DateTime<Utc>,
    #[serde(with = "timestamp")]
    pub end: DateTime<Utc>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_train_labeled: 1000,
            n_unlabeled_pool: 8000,
            n_traffic: 5000,
            train_positive_prior: 0.40,
            traffic_positive_prior: 0.01,
            languages: vec!["de".into(), "pl".into()],
            primary_language_share: 0.95,
            vocab_positive: words(POSITIVE_WORDS),
            vocab_negative: words(ESCALATED_NEGATIVE_WORDS),
            vocab_everyday: words(EVERYDAY_NEGATIVE_WORDS),
            vocab_context: words(CONTEXT_WORDS),
            noise_rate: 0.05,
            escalated_negative_rate: 0.10,
            fcc_positive_rate: 0.5,
            test_fraction: 0.08,
            start: timestamp::parse("2020-07-01T00:00:00Z").unwrap(),
            test_cutoff: timestamp::parse("2021-06-01T00:00:00Z").unwrap(),
            end: timestamp::parse("2021-07-01T00:00:00Z").unwrap(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Synth(m));
        for (name, p) in [
            ("train_positive_prior", self.train_positive_prior),
            ("traffic_positive_prior", self.traffic_positive_prior),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} must lie in (0,1), got {p}"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!(
                "noise_rate must lie in [0,1), got {}",
                self.noise_rate
            ));
        }
        for (name, p) in [
            ("primary_language_share", self.primary_language_share),
            ("escalated_negative_rate", self.escalated_negative_rate),
            ("fcc_positive_rate", self.fcc_positive_rate),
            ("test_fraction", self.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0,1], got {p}"));
            }
        }
        if self.languages.is_empty() {
            return bad("languages is empty".into());
        }
        for (name, v) in [
            ("vocab_positive", &self.vocab_positive),
            ("vocab_negative", &self.vocab_negative),
            ("vocab_everyday", &self.vocab_everyday),
            ("vocab_context", &self.vocab_context),
        ] {
            if v.is_empty() {
                return bad(format!("{name} is empty"));
            }
        }
        let positive: std::collections::HashSet<_> = self.vocab_positive.iter().collect();
        let overlap = self
            .vocab_negative
            .iter()
            .chain(&self.vocab_everyday)
            .chain(&self.vocab_context)
            .find(|w| positive.contains(w));
        if let Some(w) = overlap {
            return bad(format!(
                "token {w:?} appears in the positive inventory and another"
            ));
        }
        if !(self.start < self.test_cutoff && self.test_cutoff < self.end) {
            return bad("timestamps must satisfy start < test_cutoff < end".into());
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`]. Pool and traffic comments carry no
/// label; their hidden classes are kept in `truth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub traffic: Dataset,
    pub truth: BTreeMap<String, Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Positive,
    Escalated,
    Everyday,
}

impl Kind {
    fn label(self) -> Label {
        match self {
            Kind::Positive => Label::Positive,
            _ => Label::Negative,
        }
    }
}

fn round_count(p: f64, n: usize) -> usize {
    (p * n as f64 + 0.5).floor() as usize
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a SynthSpec) -> Self {
        Generator {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        }
    }

    fn pick<'b>(&mut self, from: &'b [String]) -> &'b str {
        from.choose(&mut self.rng).expect("nonempty vocabulary")
    }

    fn text(&mut self, kind: Kind, lang: &str) -> String {
        let spec = self.spec;
        let (len_range, context_share) = match kind {
            Kind::Positive => (10..=18, 0.25),
            Kind::Escalated => (10..=18, 0.10),
            Kind::Everyday => (6..=14, 0.30),
        };
        let len: usize = self.rng.gen_range(len_range);
        let n_context = (len as f64 * context_share).floor() as usize;
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        for _ in 0..n_context {
            tokens.push(self.pick(&spec.vocab_context).to_string());
        }
        for _ in n_context..len {
            let swap = self.rng.gen_bool(spec.noise_rate);
            let tok = match (kind, swap) {
                (Kind::Positive, false) | (Kind::Escalated | Kind::Everyday, true) => {
                    self.pick(&spec.vocab_positive).to_string()
                }
                (Kind::Positive, true) => {
                    let n_neg = spec.vocab_negative.len();
                    let i = self.rng.gen_range(0..n_neg + spec.vocab_everyday.len());
                    if i < n_neg {
                        spec.vocab_negative[i].clone()
                    } else {
                        spec.vocab_everyday[i - n_neg].clone()
                    }
                }
                (Kind::Escalated, false) => self.pick(&spec.vocab_negative).to_string(),
                (Kind::Everyday, false) => self.pick(&spec.vocab_everyday).to_string(),
            };
            tokens.push(tok);
        }
        tokens.shuffle(&mut self.rng);
        let suffix = default_suffix(lang);
        tokens
            .iter()
            .map(|t| format!("{t}{suffix}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn language(&mut self) -> String {
        let langs = &self.spec.languages;
        if langs.len() == 1 || self.rng.gen_bool(self.spec.primary_language_share) {
            langs[0].clone()
        } else {
            langs[1..].choose(&mut self.rng).expect("nonempty").clone()
        }
    }

    fn instant(&mut self, from: DateTime<Utc>, to: DateTime<Utc>) -> DateTime<Utc> {
        let span = (to - from).num_seconds();
        from + Duration::seconds(self.rng.gen_range(0..span))
    }

    fn comment(
        &mut self,
        id: String,
        kind: Kind,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Comment {
        let lang = self.language();
        let text = self.text(kind, &lang);
        let mut c = Comment::new(id, text, lang);
        c.timestamp = self.instant(from, to);
        c.label = Some(kind.label());
        c.source = Source::Original;
        c
    }

    fn negative_kinds(&mut self, n: usize) -> Vec<Kind> {
        let n_escalated = round_count(self.spec.escalated_negative_rate, n);
        let mut kinds = vec![Kind::Escalated; n_escalated];
        kinds.resize(n, Kind::Everyday);
        kinds.shuffle(&mut self.rng);
        kinds
    }
}

fn sort_by_time(comments: &mut [Comment]) {
    comments.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

/// Deterministic for a fixed spec (including its seed).
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCorpus, CorpusError> {
    spec.validate()?;
    let g = &mut Generator::new(spec);
    let (start, cutoff, end) = (spec.start, spec.test_cutoff, spec.end);

    // Labeled: escalated positives and escalated negatives, stratified into
    // the history and the final window.
    let n_pos = round_count(spec.train_positive_prior, spec.n_train_labeled);
    let n_neg = spec.n_train_labeled - n_pos;
    let n_test_pos = round_count(spec.test_fraction, n_pos);
    let n_test_neg = round_count(spec.test_fraction, n_neg);
    let mut labeled = Vec::with_capacity(spec.n_train_labeled);
    for i in 0..spec.n_train_labeled {
        let (kind, in_test) = if i < n_pos {
            (Kind::Positive, i < n_test_pos)
        } else {
            (Kind::Escalated, i - n_pos < n_test_neg)
        };
        let (from, to) = if in_test {
            (cutoff, end)
        } else {
            (start, cutoff)
        };
        let mut c = g.comment(format!("L{i:06}"), kind, from, to);
        c.fcc_escalated = true;
        labeled.push(c);
    }

    // Traffic: the final-window labeled comments plus fresh arrivals, with an
    // exact positive count.
    let n_traffic_pos = round_count(spec.traffic_positive_prior, spec.n_traffic);
    let test_count = n_test_pos + n_test_neg;
    if n_test_pos > n_traffic_pos || test_count > spec.n_traffic {
        return Err(CorpusError::Synth(format!(
            "{n_test_pos} labeled positives fall in the traffic window but traffic holds only {n_traffic_pos} positives"
        )));
    }
    let mut truth = BTreeMap::new();
    let mut traffic = Vec::with_capacity(spec.n_traffic);
    for c in labeled.iter().filter(|c| c.timestamp >= cutoff) {
        let mut t = c.clone();
        truth.insert(t.id.clone(), t.label.take().expect("labeled"));
        traffic.push(t);
    }
    let fresh_pos = n_traffic_pos - n_test_pos;
    let fresh_neg = spec.n_traffic - n_traffic_pos - n_test_neg;
    let mut kinds = vec![Kind::Positive; fresh_pos];
    kinds.extend(g.negative_kinds(fresh_neg));
    kinds.shuffle(&mut g.rng);
    for (i, kind) in kinds.into_iter().enumerate() {
        let mut c = g.comment(format!("T{i:06}"), kind, cutoff, end);
        c.fcc_escalated = kind == Kind::Positive && g.rng.gen_bool(spec.fcc_positive_rate);
        truth.insert(c.id.clone(), c.label.take().expect("labeled"));
        traffic.push(c);
    }

    // Pool: historic comments filtered out by front-line agents.
    let n_pool_pos = round_count(spec.traffic_positive_prior, spec.n_unlabeled_pool);
    let mut kinds = vec![Kind::Positive; n_pool_pos];
    kinds.extend(g.negative_kinds(spec.n_unlabeled_pool - n_pool_pos));
    kinds.shuffle(&mut g.rng);
    let mut pool = Vec::with_capacity(spec.n_unlabeled_pool);
    for (i, kind) in kinds.into_iter().enumerate() {
        let mut c = g.comment(format!("U{i:06}"), kind, start, cutoff);
        truth.insert(c.id.clone(), c.label.take().expect("labeled"));
        pool.push(c);
    }

    sort_by_time(&mut labeled);
    sort_by_time(&mut traffic);
    sort_by_time(&mut pool);
    Ok(SynthCorpus {
        labeled: Dataset::new("labeled", labeled),
        unlabeled: Dataset::new("unlabeled", pool),
        traffic: Dataset::new("traffic", traffic),
        truth,
    })
}
