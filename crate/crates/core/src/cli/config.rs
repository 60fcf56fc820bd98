//! TOML run configuration. Relative paths are resolved against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::augment::PseudoTranslatorConfig;
use crate::corpus::SplitSpec;
use crate::embed::EmbedderConfig;
use crate::kpi::DEFAULT_TARGET_RECALL;
use crate::mine::MiningConfig;
use crate::model::TrainConfig;

/// Environment override for the pinned clock.
pub const CLOCK_ENV: &str = "SAFETY_TRIAGE_CLOCK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub labeled: PathBuf,
    #[serde(default)]
    pub unlabeled: Option<PathBuf>,
    pub traffic: PathBuf,
    /// Precomputed vectors (id + tab-separated reals) replacing the hashing encoder.
    #[serde(default)]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineSettings {
    #[serde(flatten)]
    pub mining: MiningConfig,
    /// Mined negatives per labeled positive when `target_count` is unset.
    pub negatives_per_positive: Option<f64>,
}

impl Default for MineSettings {
    fn default() -> Self {
        MineSettings {
            mining: MiningConfig::default(),
            negatives_per_positive: Some(20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSettings {
    pub languages: Vec<String>,
    /// Explicit suffix per language; missing languages use the default rule.
    pub suffixes: BTreeMap<String, String>,
    pub seed: u64,
    pub permute_tokens: bool,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        AugmentSettings {
            languages: crate::corpus::MARKET_LANGUAGES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            suffixes: BTreeMap::new(),
            seed: 0,
            permute_tokens: true,
        }
    }
}

impl AugmentSettings {
    pub fn translator_config(&self) -> PseudoTranslatorConfig {
        let mut cfg = PseudoTranslatorConfig::for_languages(&self.languages, self.seed);
        cfg.permute_tokens = self.permute_tokens;
        for (lang, suffix) in &self.suffixes {
            cfg.language_suffix_map.insert(lang.clone(), suffix.clone());
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateSettings {
    pub target_recall: f64,
}

impl Default for CalibrateSettings {
    fn default() -> Self {
        CalibrateSettings {
            target_recall: DEFAULT_TARGET_RECALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataPaths,
    pub split: SplitSpec,
    #[serde(default)]
    pub embed: EmbedderConfig,
    #[serde(default)]
    pub mine: MineSettings,
    #[serde(default)]
    pub augment: AugmentSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub calibrate: CalibrateSettings,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Pinned clock (ISO-8601 UTC) for reproducible artifacts.
    #[serde(default)]
    pub clock: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = super::read_file(path, "config file")?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.labeled);
        fix(&mut self.data.traffic);
        if let Some(p) = self.data.unlabeled.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.vectors.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out.as_mut() {
            fix(p);
        }
    }

    /// Overrides every component seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.mine.mining.seed = seed;
        self.augment.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |e: String| CliError::Validation(e);
        self.split.validate().map_err(|e| v(e.to_string()))?;
        self.embed.validate().map_err(|e| v(e.to_string()))?;
        self.mine.mining.validate().map_err(|e| v(e.to_string()))?;
        self.train.validate().map_err(|e| v(e.to_string()))?;
        self.augment
            .translator_config()
            .validate()
            .map_err(|e| v(e.to_string()))?;
        if self.augment.languages.is_empty() {
            return Err(v("augment.languages is empty".into()));
        }
        let t = self.calibrate.target_recall;
        if !(t > 0.0 && t <= 1.0) {
            return Err(v(format!(
                "calibrate.target_recall must lie in (0,1], got {t}"
            )));
        }
        if let Some(r) = self.mine.negatives_per_positive {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(v(format!(
                    "mine.negatives_per_positive must be >= 0, got {r}"
                )));
            }
        }
        Ok(())
    }

    /// Referenced input files must exist at command start.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let mut paths = vec![
            (&self.data.labeled, "labeled corpus"),
            (&self.data.traffic, "traffic corpus"),
        ];
        if let Some(p) = &self.data.unlabeled {
            paths.push((p, "unlabeled pool"));
        }
        if let Some(p) = &self.data.vectors {
            paths.push((p, "vector file"));
        }
        for (p, what) in paths {
            if !p.exists() {
                return Err(CliError::missing(p, what));
            }
        }
        Ok(())
    }
}
