//! Parallel-corpus augmentation.
//!
//! Every labeled comment is replicated into each configured language with its
//! label and timestamp unchanged. All versions of one comment share a
//! `group_id`, which is the id of the original.

use std::collections::{BTreeMap, HashSet};

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::hash::Hasher;

use crate::corpus::{Comment, Dataset, Source};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("no translation rule for language {0:?}")]
    UnknownLanguage(String),
    #[error("invalid translator config: {0}")]
    Config(String),
    #[error("translating comment {id:?}: {source}")]
    Comment {
        id: String,
        #[source]
        source: Box<AugmentError>,
    },
    #[error("generated id {0:?} collides with an existing comment")]
    DuplicateId(String),
    #[error("language list is empty")]
    NoLanguages,
}

/// Machine translation seam. Translating into the source language must return
/// the text unchanged.
pub trait Translator: Send + Sync {
    fn translate(
        &self,
        text: &str,
        source_lang: &str,
        target_lang: &str,
    ) -> Result<String, AugmentError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoTranslatorConfig {
    pub language_suffix_map: BTreeMap<String, String>,
    #[serde(default)]
    pub seed: u64,
    /// Shuffle token order per target language in addition to suffixing.
    #[serde(default = "default_true")]
    pub permute_tokens: bool,
}

fn default_true() -> bool {
    true
}

impl PseudoTranslatorConfig {
    /// Suffix for each language is its tag with non-alphanumerics removed, so
    /// the suffix survives tokenization as part of the token.
    pub fn for_languages<S: AsRef<str>>(languages: &[S], seed: u64) -> Self {
        let language_suffix_map = languages
            .iter()
            .map(|l| (l.as_ref().to_string(), default_suffix(l.as_ref())))
            .collect();
        PseudoTranslatorConfig {
            language_suffix_map,
            seed,
            permute_tokens: true,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let mut seen = HashSet::new();
        for (lang, suffix) in &self.language_suffix_map {
            if suffix.is_empty() {
                return Err(AugmentError::Config(format!("empty suffix for {lang:?}")));
            }
            if !seen.insert(suffix.as_str()) {
                return Err(AugmentError::Config(format!(
                    "suffix {suffix:?} used by more than one language"
                )));
            }
        }
        Ok(())
    }
}

/// `q` followed by the lowercase alphanumerics of the tag (`de` -> `qde`).
/// Alphanumeric so the suffix stays inside the token after tokenization; the
/// `q` marker keeps it from matching ordinary word endings such as `-en`.
pub fn default_suffix(lang: &str) -> String {
    std::iter::once('q')
        .chain(
            lang.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase),
        )
        .collect()
}

/// Deterministic stand-in for machine translation: strips the source
/// language's suffix from every token, appends the target's, and optionally
/// applies a seeded token permutation that depends only on the target language
/// and the token count.
#[derive(Debug, Clone)]
pub struct PseudoTranslator {
    config: PseudoTranslatorConfig,
}

impl PseudoTranslator {
    pub fn new(config: PseudoTranslatorConfig) -> Result<Self, AugmentError> {
        config.validate()?;
        Ok(PseudoTranslator { config })
    }

    pub fn config(&self) -> &PseudoTranslatorConfig {
        &self.config
    }

    fn permutation(&self, target: &str, n: usize) -> Vec<usize> {
        let mut h = FnvHasher::default();
        h.write(&self.config.seed.to_le_bytes());
        h.write(target.as_bytes());
        h.write(&(n as u64).to_le_bytes());
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(h.finish()));
        order
    }
}

impl Translator for PseudoTranslator {
    fn translate(
        &self,
        text: &str,
        source_lang: &str,
        target_lang: &str,
    ) -> Result<String, AugmentError> {
        if source_lang == target_lang {
            return Ok(text.to_string());
        }
        let target_suffix = self
            .config
            .language_suffix_map
            .get(target_lang)
            .ok_or_else(|| AugmentError::UnknownLanguage(target_lang.to_string()))?;
        let source_suffix = self.config.language_suffix_map.get(source_lang);

        let tokens: Vec<String> = text
            .split_whitespace()
            .map(|tok| {
                let stem = source_suffix
                    .and_then(|s| tok.strip_suffix(s.as_str()))
                    .filter(|stem| !stem.is_empty())
                    .unwrap_or(tok);
                format!("{stem}{target_suffix}")
            })
            .collect();

        let out: Vec<&str> = if self.config.permute_tokens {
            self.permutation(target_lang, tokens.len())
                .into_iter()
                .map(|i| tokens[i].as_str())
                .collect()
        } else {
            tokens.iter().map(String::as_str).collect()
        };
        Ok(out.join(" "))
    }
}

/// Returns `c` rendered in `target`. Translating into the comment's own
/// language returns the original untouched.
pub fn translate_comment(
    c: &Comment,
    target: &str,
    translator: &dyn Translator,
) -> Result<Comment, AugmentError> {
    if c.lang == target {
        return Ok(c.clone());
    }
    let text = translator
        .translate(&c.text, &c.lang, target)
        .map_err(|e| AugmentError::Comment {
            id: c.id.clone(),
            source: Box::new(e),
        })?;
    let mut out = c.clone();
    out.id = format!("{}#{}", c.id, target);
    out.text = text;
    out.lang = target.to_string();
    out.source = Source::Translated;
    out.group_id = Some(c.group_key().to_string());
    Ok(out)
}

/// Emits, for each input comment, the original followed by its translation
/// into every other language of `languages`.
pub fn augment_parallel(
    d: &Dataset,
    languages: &[String],
    translator: &dyn Translator,
) -> Result<Dataset, AugmentError> {
    if languages.is_empty() {
        return Err(AugmentError::NoLanguages);
    }
    let mut out = Vec::with_capacity(d.len() * languages.len());
    let mut seen: HashSet<String> = HashSet::with_capacity(d.len() * languages.len());
    for c in d.iter() {
        let mut push = |c: Comment| {
            if !seen.insert(c.id.clone()) {
                return Err(AugmentError::DuplicateId(c.id));
            }
            out.push(c);
            Ok(())
        };
        push(c.clone())?;
        for lang in languages.iter().filter(|l| **l != c.lang) {
            push(translate_comment(c, lang, translator)?)?;
        }
    }
    Ok(Dataset::new(format!("{}+pc", d.name), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn translator(permute: bool) -> PseudoTranslator {
        let mut cfg = PseudoTranslatorConfig::for_languages(&["de", "en", "pl"], 3);
        cfg.permute_tokens = permute;
        PseudoTranslator::new(cfg).unwrap()
    }

    #[test]
    fn suffix_rule() {
        let mut cfg = PseudoTranslatorConfig::for_languages(&["en"], 0);
        cfg.language_suffix_map.insert("de".into(), "_de".into());
        cfg.permute_tokens = false;
        let t = PseudoTranslator::new(cfg).unwrap();
        assert_eq!(
            t.translate("broken heel", "en", "de").unwrap(),
            "broken_de heel_de"
        );
    }

    #[test]
    fn translation_into_source_is_identity() {
        let t = translator(true);
        assert_eq!(t.translate("a b c", "de", "de").unwrap(), "a b c");
        let c = Comment::new("c1", "broken heel", "de").with_label(Label::Positive);
        assert_eq!(translate_comment(&c, "de", &t).unwrap(), c);
    }

    #[test]
    fn translated_comment_fields() {
        let t = translator(false);
        let c = Comment::new("c1", "brokenqde heelqde", "de").with_label(Label::Positive);
        let out = translate_comment(&c, "pl", &t).unwrap();
        assert_eq!(out.id, "c1#pl");
        assert_eq!(out.text, "brokenqpl heelqpl");
        assert_eq!(out.label, Some(Label::Positive));
        assert_eq!(out.timestamp, c.timestamp);
        assert_eq!(out.source, Source::Translated);
        assert_eq!(out.group_id.as_deref(), Some("c1"));
    }

    #[test]
    fn permutation_preserves_token_multiset() {
        let t = translator(true);
        let out = t.translate("a b c d e f", "de", "en").unwrap();
        let mut toks: Vec<&str> = out.split(' ').collect();
        toks.sort();
        assert_eq!(toks, ["aqen", "bqen", "cqen", "dqen", "eqen", "fqen"]);
    }

    #[test]
    fn unknown_target_language_names_comment() {
        let t = translator(false);
        let c = Comment::new("c9", "x", "de");
        let err = translate_comment(&c, "fi", &t).unwrap_err();
        assert!(err.to_string().contains("c9"), "{err}");
    }

    #[test]
    fn duplicate_suffixes_rejected() {
        let mut cfg = PseudoTranslatorConfig::for_languages(&["de", "en"], 0);
        cfg.language_suffix_map.insert("en".into(), "qde".into());
        assert!(PseudoTranslator::new(cfg).is_err());
    }

    #[test]
    fn augment_counts_and_identity() {
        let langs: Vec<String> = crate::corpus::MARKET_LANGUAGES
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = PseudoTranslator::new(PseudoTranslatorConfig::for_languages(&langs, 0)).unwrap();
        let d = Dataset::new(
            "d",
            vec![
                Comment::new("a", "sharp edge", "de").with_label(Label::Positive),
                Comment::new("b", "torn label", "pl").with_label(Label::Negative),
            ],
        );
        let out = augment_parallel(&d, &langs, &t).unwrap();
        assert_eq!(out.len(), 36);

        let only_source =
            augment_parallel(&d, &["de".to_string(), "pl".to_string()][..1], &t).unwrap();
        assert_eq!(only_source.len(), 3);
        let same = Dataset::new("d", vec![d.comments[0].clone()]);
        assert_eq!(
            augment_parallel(&same, &["de".to_string()], &t)
                .unwrap()
                .comments,
            same.comments
        );
    }

    #[test]
    fn generated_id_collision() {
        let t = translator(false);
        let d = Dataset::new(
            "d",
            vec![
                Comment::new("a#en", "x", "pl"),
                Comment::new("a", "y", "de"),
            ],
        );
        assert!(matches!(
            augment_parallel(&d, &["de".into(), "en".into()], &t),
            Err(AugmentError::DuplicateId(_))
        ));
    }
}
