//! Pipeline stages and their on-disk layout.
//!
//! ```text
//! <out>/dataset/{train,dev,test,traffic}.jsonl   current splits
//! <out>/dataset/manifest.json                    stages applied so far
//! <out>/mining/{report.json,mined.jsonl}
//! <out>/models/model-<version>.json
//! <out>/models/{trained,current}.txt             version pointers
//! <out>/calibration.json
//! <out>/reports/kpi-<version>.{jsonl,txt}
//! ```
//!
//! Every stage reads its inputs from disk, so any stage subset can be run
//! against an existing output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_encoder, read_file, write_file, CliError, MineSettings, RunConfig};
use crate::augment::{augment_parallel, AugmentError, PseudoTranslator, Translator};
use crate::corpus::{
    corpus_to_string, load_corpus, temporal_split, Dataset, Label, Source, SplitSpec, Splits,
};
use crate::embed::{embed_batch, Encoder};
use crate::kpi::{calibrate_threshold, kpi_report, score_dataset, CalibrationResult, KpiReport};
use crate::mine::{attach_mined_labels, mine_noisy_negatives, MiningReport};
use crate::model::{load_artifact, save_artifact, train_datasets, ModelArtifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Split,
    Mine,
    Augment,
    Train,
    Calibrate,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Split,
        Stage::Mine,
        Stage::Augment,
        Stage::Train,
        Stage::Calibrate,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Mine => "mine",
            Stage::Augment => "augment",
            Stage::Train => "train",
            Stage::Calibrate => "calibrate",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CliError::Validation(format!("unknown stage {s:?}")))
    }
}

/// Parses a comma list into canonical stage order, dropping duplicates.
pub fn parse_stages(raw: &str) -> Result<Vec<Stage>, CliError> {
    let mut stages = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Stage::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    stages.sort();
    stages.dedup();
    Ok(stages)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutputs {
    pub stages: Vec<Stage>,
    pub written: Vec<PathBuf>,
    pub report: Option<KpiReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    stages: Vec<Stage>,
    /// Dataset name per split part.
    names: BTreeMap<String, String>,
}

impl Manifest {
    /// Ablation label: `Original`, `Original+NN`, `Original+NN+PC`.
    fn label(&self) -> String {
        let mut s = "Original".to_string();
        if self.stages.contains(&Stage::Mine) {
            s.push_str("+NN");
        }
        if self.stages.contains(&Stage::Augment) {
            s.push_str("+PC");
        }
        s
    }
}

struct Layout {
    root: PathBuf,
}

const PARTS: [&str; 4] = ["train", "dev", "test", "traffic"];

impl Layout {
    fn dataset(&self, part: &str) -> PathBuf {
        self.root.join("dataset").join(format!("{part}.jsonl"))
    }

    fn manifest(&self) -> PathBuf {
        self.root.join("dataset").join("manifest.json")
    }

    fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    fn model(&self, version: &str) -> PathBuf {
        self.models().join(format!("model-{version}.json"))
    }

    fn pointer(&self, name: &str) -> PathBuf {
        self.models().join(format!("{name}.txt"))
    }
}

fn part<'a>(splits: &'a Splits, name: &str) -> &'a Dataset {
    match name {
        "train" => &splits.train,
        "dev" => &splits.dev,
        "test" => &splits.test,
        _ => &splits.traffic,
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

struct Writer<'a> {
    out: &'a mut StageOutputs,
}

impl Writer<'_> {
    fn write(&mut self, path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        write_file(&path, bytes)?;
        self.out.written.push(path);
        Ok(())
    }
}

fn write_splits(
    layout: &Layout,
    splits: &Splits,
    stages: Vec<Stage>,
    w: &mut Writer,
) -> Result<(), CliError> {
    let mut names = BTreeMap::new();
    for p in PARTS {
        let d = part(splits, p);
        w.write(layout.dataset(p), corpus_to_string(d))?;
        names.insert(p.to_string(), d.name.clone());
    }
    w.write(layout.manifest(), to_json(&Manifest { stages, names }))
}

fn read_splits(layout: &Layout) -> Result<(Splits, Manifest), CliError> {
    let path = layout.manifest();
    if !path.exists() {
        return Err(CliError::missing(
            &path,
            "split outputs (run the split stage)",
        ));
    }
    let manifest: Manifest = serde_json::from_str(&read_file(&path, "split manifest")?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let load = |p: &str| -> Result<Dataset, CliError> {
        let mut d = load_corpus(layout.dataset(p), p != "traffic")?;
        if let Some(name) = manifest.names.get(p) {
            d.name = name.clone();
        }
        Ok(d)
    };
    let splits = Splits {
        train: load("train")?,
        dev: load("dev")?,
        test: load("test")?,
        traffic: load("traffic")?,
    };
    Ok((splits, manifest))
}

fn read_pointer(layout: &Layout, name: &str, stage: Stage) -> Result<String, CliError> {
    let path = layout.pointer(name);
    if !path.exists() {
        return Err(CliError::missing(
            &path,
            &format!("{name} model pointer (run the {stage} stage)"),
        ));
    }
    Ok(read_file(&path, "model pointer")?.trim().to_string())
}

/// Adds every configured language version of each test comment, so language
/// fairness can be measured on parallel groups.
pub fn expand_test_versions(
    test: &Dataset,
    languages: &[String],
    translator: &dyn Translator,
) -> Result<Dataset, AugmentError> {
    let mut d = augment_parallel(test, languages, translator)?;
    d.name = test.name.clone();
    Ok(d)
}

/// Mines noisy negatives from the pre-cutoff part of `pool`, using the
/// annotated train and dev comments as references. The mined comments are
/// split between train and dev with the split's dev fraction.
pub fn mine_splits(
    splits: &Splits,
    pool: &Dataset,
    encoder: &dyn Encoder,
    settings: &MineSettings,
    split: &SplitSpec,
) -> Result<(Splits, MiningReport, Dataset), CliError> {
    let references: Vec<_> = splits.train.iter().chain(splits.dev.iter()).collect();
    if references.iter().any(|c| c.source != Source::Original) {
        return Err(CliError::Validation(
            "mining expects annotated splits without mined or translated comments".into(),
        ));
    }
    let (pos, neg): (Vec<_>, Vec<_>) = references
        .iter()
        .copied()
        .partition(|c| c.label == Some(Label::Positive));
    let labeled_ids: std::collections::HashSet<&str> =
        references.iter().map(|c| c.id.as_str()).collect();
    let window = Dataset::new(
        pool.name.clone(),
        pool.iter()
            .filter(|c| c.timestamp < split.test_cutoff && !labeled_ids.contains(c.id.as_str()))
            .cloned()
            .collect(),
    );

    let mut cfg = settings.mining.clone();
    if cfg.target_count.is_none() {
        cfg.target_count = settings
            .negatives_per_positive
            .map(|r| (r * pos.len() as f64).round() as usize);
    }
    let positives = embed_batch(pos.iter().copied(), encoder)?;
    let negatives = embed_batch(neg.iter().copied(), encoder)?;
    let unlabeled = embed_batch(window.iter(), encoder)?;
    let mined = mine_noisy_negatives(&positives, &negatives, &unlabeled, &cfg)?;
    let report = MiningReport::new(&cfg, pos.len(), neg.len(), window.len(), &mined);
    let mined_set = attach_mined_labels(&Dataset::new("mined", Vec::new()), &window, &mined)?;

    let n = mined_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let dev_n = (split.dev_fraction * n as f64 + 0.5).floor() as usize;
    let mut to_dev = vec![false; n];
    for &i in &order[..dev_n] {
        to_dev[i] = true;
    }

    let mut out = splits.clone();
    for (c, dev) in mined_set.comments.iter().zip(to_dev) {
        if dev {
            out.dev.comments.push(c.clone());
        } else {
            out.train.comments.push(c.clone());
        }
    }
    out.train.name.push_str("+nn");
    out.dev.name.push_str("+nn");
    Ok((out, report, Dataset::new("mined", mined_set.comments)))
}

fn augment_part(
    d: &Dataset,
    languages: &[String],
    translator: &dyn Translator,
) -> Result<Dataset, AugmentError> {
    let (mined, annotated): (Vec<_>, Vec<_>) = d
        .comments
        .iter()
        .cloned()
        .partition(|c| c.source == Source::Mined);
    let mut out = augment_parallel(
        &Dataset::new(d.name.clone(), annotated),
        languages,
        translator,
    )?;
    out.comments.extend(mined);
    Ok(out)
}

/// Adds translations of the annotated train and dev comments. Mined
/// negatives are carried over untranslated.
pub fn augment_splits(
    splits: &Splits,
    languages: &[String],
    translator: &dyn Translator,
) -> Result<Splits, AugmentError> {
    Ok(Splits {
        train: augment_part(&splits.train, languages, translator)?,
        dev: augment_part(&splits.dev, languages, translator)?,
        test: splits.test.clone(),
        traffic: splits.traffic.clone(),
    })
}

/// Sets the threshold at the target dev recall and returns the calibrated
/// artifact under its new version.
pub fn calibrate_model(
    model: &ModelArtifact,
    dev: &Dataset,
    encoder: &dyn Encoder,
    target_recall: f64,
    created_at: DateTime<Utc>,
) -> Result<(ModelArtifact, CalibrationResult), CliError> {
    let scored = score_dataset(model, dev, encoder)?;
    let result = calibrate_threshold(&scored, target_recall)?;
    Ok((model.with_threshold(result.threshold, created_at)?, result))
}

/// Exclusive ownership of an output directory for one invocation.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Validation(format!(
                    "{} is locked by another run ({})",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

#[derive(Serialize)]
struct CalibrationRecord<'a> {
    model_version: &'a str,
    base_version: &'a str,
    #[serde(flatten)]
    result: &'a CalibrationResult,
}

/// Runs `stages` in canonical order against `out`. An empty plan touches
/// nothing.
pub fn cmd_pipeline(
    cfg: &RunConfig,
    stages: &[Stage],
    out: &Path,
    clock: DateTime<Utc>,
) -> Result<StageOutputs, CliError> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let mut outputs = StageOutputs {
        stages: stages.clone(),
        ..StageOutputs::default()
    };
    if stages.is_empty() {
        return Ok(outputs);
    }
    cfg.validate()?;
    cfg.check_inputs()?;

    let _lock = DirLock::acquire(out)?;
    let layout = Layout {
        root: out.to_path_buf(),
    };
    let vectors = cfg.data.vectors.as_deref();
    let translator = PseudoTranslator::new(cfg.augment.translator_config())?;
    let mut w = Writer { out: &mut outputs };
    let mut report = None;

    for stage in stages {
        match stage {
            Stage::Split => {
                let labeled = load_corpus(&cfg.data.labeled, true)?;
                let traffic = load_corpus(&cfg.data.traffic, false)?;
                let mut splits = temporal_split(&labeled, &traffic, &cfg.split)?;
                splits.test =
                    expand_test_versions(&splits.test, &cfg.augment.languages, &translator)?;
                write_splits(&layout, &splits, vec![Stage::Split], &mut w)?;
            }
            Stage::Mine => {
                let (splits, manifest) = read_splits(&layout)?;
                if manifest.stages.contains(&Stage::Mine)
                    || manifest.stages.contains(&Stage::Augment)
                {
                    return Err(CliError::Validation(format!(
                        "mine must run on fresh split outputs; {} already has {}",
                        out.display(),
                        manifest.label()
                    )));
                }
                let pool_path = cfg.data.unlabeled.as_ref().ok_or_else(|| {
                    CliError::MissingPrerequisite("data.unlabeled is not configured".into())
                })?;
                let pool = load_corpus(pool_path, false)?;
                let encoder = build_encoder(&cfg.embed, vectors)?;
                let (splits, mining, mined) =
                    mine_splits(&splits, &pool, encoder.as_ref(), &cfg.mine, &cfg.split)?;
                w.write(out.join("mining").join("report.json"), to_json(&mining))?;
                w.write(
                    out.join("mining").join("mined.jsonl"),
                    corpus_to_string(&mined),
                )?;
                let mut applied = manifest.stages;
                applied.push(Stage::Mine);
                write_splits(&layout, &splits, applied, &mut w)?;
            }
            Stage::Augment => {
                let (splits, manifest) = read_splits(&layout)?;
                if manifest.stages.contains(&Stage::Augment) {
                    return Err(CliError::Validation(format!(
                        "{} is already augmented",
                        out.display()
                    )));
                }
                let splits = augment_splits(&splits, &cfg.augment.languages, &translator)?;
                let mut applied = manifest.stages;
                applied.push(Stage::Augment);
                write_splits(&layout, &splits, applied, &mut w)?;
            }
            Stage::Train => {
                let (splits, _) = read_splits(&layout)?;
                let encoder = build_encoder(&cfg.embed, vectors)?;
                let (model, trace) = train_datasets(
                    &splits.train,
                    &splits.dev,
                    encoder.as_ref(),
                    &cfg.train,
                    clock,
                )?;
                w.out.written.push(save_artifact(&model, layout.models())?);
                w.write(
                    layout
                        .models()
                        .join(format!("trace-{}.json", model.version)),
                    to_json(&trace),
                )?;
                w.write(layout.pointer("trained"), format!("{}\n", model.version))?;
            }
            Stage::Calibrate => {
                let base_version = read_pointer(&layout, "trained", Stage::Train)?;
                let base = load_artifact(layout.model(&base_version))?;
                let (splits, _) = read_splits(&layout)?;
                let encoder = build_encoder(&base.embedder_config, vectors)?;
                let (model, result) = calibrate_model(
                    &base,
                    &splits.dev,
                    encoder.as_ref(),
                    cfg.calibrate.target_recall,
                    clock,
                )?;
                w.out.written.push(save_artifact(&model, layout.models())?);
                let record = CalibrationRecord {
                    model_version: &model.version,
                    base_version: &base_version,
                    result: &result,
                };
                w.write(out.join("calibration.json"), to_json(&record))?;
                w.write(layout.pointer("current"), format!("{}\n", model.version))?;
            }
            Stage::Evaluate => {
                let version = read_pointer(&layout, "current", Stage::Calibrate)?;
                let model = load_artifact(layout.model(&version))?;
                let (splits, manifest) = read_splits(&layout)?;
                let encoder = build_encoder(&model.embedder_config, vectors)?;
                let kpi = kpi_report(&model, &splits, encoder.as_ref())?;
                let reports = out.join("reports");
                w.write(reports.join(format!("kpi-{version}.jsonl")), kpi.to_jsonl())?;
                let table = format!("{}\n{}", manifest.label(), kpi.to_table());
                w.write(reports.join(format!("kpi-{version}.txt")), table)?;
                report = Some(kpi);
            }
        }
    }
    outputs.report = report;
    Ok(outputs)
}
