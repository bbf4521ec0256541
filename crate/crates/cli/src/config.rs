//! Run configuration, read from TOML or JSON.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every input path must exist when the config is loaded.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use xlcap::augment::{AugmentConfig, HyperConfig, Strategy};
use xlcap::recognition::THRESHOLD_GRID;
use xlcap::taxonomy::HypernymConfig;
use xlcap::CaptionSource;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub vocabulary: PathBuf,
    pub taxonomy: PathBuf,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Flickr30K-style English tokens file.
    pub english: PathBuf,
    /// Image-id list that aligned caption files follow line by line.
    #[serde(default)]
    pub image_ids: Option<PathBuf>,
    #[serde(default)]
    pub sets: Vec<CaptionSetConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionSetConfig {
    pub language: String,
    pub source: CaptionSource,
    #[serde(default)]
    pub set_index: Option<u8>,
    /// One caption per line, aligned with `corpus.image_ids`, unless `tabbed`.
    pub captions: PathBuf,
    /// `image_id<TAB>caption` lines instead of an aligned file.
    #[serde(default)]
    pub tabbed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    /// Serve from the cache only.
    Replay,
    /// Deterministic offline stand-in models.
    Synthetic,
    /// Recorded replies from a JSONL file.
    Fixture,
    /// A model server speaking the gateway protocol.
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub cache: PathBuf,
    pub endpoint: Option<String>,
    pub recordings: Option<PathBuf>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub embedding_dim: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Replay,
            cache: PathBuf::from("cache"),
            endpoint: None,
            recordings: None,
            max_in_flight: 8,
            timeout_secs: 120,
            embedding_dim: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice {
    Hyper,
    ParaRnd,
    ParaTgt,
    Cmb,
}

impl StrategyChoice {
    pub fn strategies(self, cmb_includes_hyper: bool) -> Vec<Strategy> {
        match self {
            StrategyChoice::Hyper => vec![Strategy::Hyper],
            StrategyChoice::ParaRnd => vec![Strategy::ParaRnd],
            StrategyChoice::ParaTgt => vec![Strategy::ParaTgt],
            StrategyChoice::Cmb if cmb_includes_hyper => vec![Strategy::Hyper, Strategy::ParaRnd, Strategy::ParaTgt],
            StrategyChoice::Cmb => vec![Strategy::ParaRnd, Strategy::ParaTgt],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub strategy: Option<StrategyChoice>,
    pub k: usize,
    pub max_replacements: Option<usize>,
    pub max_height: Option<usize>,
    /// PARA-CMB merges PARA-RND and PARA-TGT; set to also merge HYPER.
    pub cmb_includes_hyper: bool,
    pub target_language: String,
    /// Native set whose reference-split captions feed PARA-TGT prompts.
    pub reference_set: u8,
    pub parse_retries: u32,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            strategy: None,
            k: 100,
            max_replacements: None,
            max_height: None,
            cmb_includes_hyper: false,
            target_language: "de".into(),
            reference_set: 0,
            parse_retries: 1,
        }
    }
}

impl AugmentSection {
    pub fn core_config(&self, seed: u64) -> AugmentConfig {
        AugmentConfig {
            seed,
            k: self.k,
            hyper: HyperConfig {
                hypernym: HypernymConfig {
                    max_height: self.max_height,
                },
                max_replacements: self.max_replacements,
            },
            source_language: "en".into(),
            target_language: self.target_language.clone(),
            parse_retries: self.parse_retries,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Method whose mean recall is the zero line of the delta column.
    pub baseline: Option<String>,
    pub language: String,
    pub sets: Vec<u8>,
    pub methods: Vec<MethodConfig>,
    pub recognition: Option<RecognitionConfig>,
    pub stats: Option<StatsConfig>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            baseline: None,
            language: "de".into(),
            sets: vec![0, 1, 2, 3, 4],
            methods: Vec::new(),
            recognition: None,
            stats: None,
        }
    }
}

/// A retrieval row. Without embedding files the test split is embedded
/// through the provider.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    #[serde(default)]
    pub image_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub caption_embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecognitionConfig {
    pub val_scores: PathBuf,
    pub test_scores: PathBuf,
    /// Vocabulary for the ground-truth language; defaults to `vocabulary`.
    #[serde(default)]
    pub truth_vocabulary: Option<PathBuf>,
    #[serde(default = "default_truth_language")]
    pub truth_language: String,
    /// Restrict ground truth to one native set instead of all of them.
    #[serde(default)]
    pub truth_set: Option<u8>,
    #[serde(default = "default_grid")]
    pub thresholds: Vec<f64>,
}

fn default_truth_language() -> String {
    "de".into()
}

fn default_grid() -> Vec<f64> {
    THRESHOLD_GRID.to_vec()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default)]
    pub concept_counts: Option<PathBuf>,
    #[serde(default)]
    pub groups: Option<PathBuf>,
    #[serde(default)]
    pub human_eval: Option<PathBuf>,
    /// Language compared against English in the mention ratio.
    #[serde(default)]
    pub compare_language: Option<String>,
    /// Vocabulary used to count mentions in `compare_language`.
    #[serde(default)]
    pub compare_vocabulary: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.vocabulary);
        fix(&mut self.taxonomy);
        fix(&mut self.corpus.english);
        self.corpus.image_ids.as_mut().map(fix);
        for s in &mut self.corpus.sets {
            fix(&mut s.captions);
        }
        fix(&mut self.provider.cache);
        self.provider.recordings.as_mut().map(fix);
        for m in &mut self.eval.methods {
            m.image_embeddings.as_mut().map(fix);
            m.caption_embeddings.as_mut().map(fix);
        }
        if let Some(r) = &mut self.eval.recognition {
            fix(&mut r.val_scores);
            fix(&mut r.test_scores);
            r.truth_vocabulary.as_mut().map(fix);
        }
        if let Some(s) = &mut self.eval.stats {
            s.concept_counts.as_mut().map(fix);
            s.groups.as_mut().map(fix);
            s.human_eval.as_mut().map(fix);
            s.compare_vocabulary.as_mut().map(fix);
        }
    }

    /// Input files that must exist.
    fn inputs(&self) -> Vec<&Path> {
        let mut paths: Vec<&Path> = vec![&self.vocabulary, &self.taxonomy, &self.corpus.english];
        paths.extend(self.corpus.image_ids.as_deref());
        paths.extend(self.corpus.sets.iter().map(|s| s.captions.as_path()));
        paths.extend(self.provider.recordings.as_deref());
        for m in &self.eval.methods {
            paths.extend(m.image_embeddings.as_deref());
            paths.extend(m.caption_embeddings.as_deref());
        }
        if let Some(r) = &self.eval.recognition {
            paths.extend([r.val_scores.as_path(), r.test_scores.as_path()]);
            paths.extend(r.truth_vocabulary.as_deref());
        }
        if let Some(s) = &self.eval.stats {
            paths.extend(s.concept_counts.as_deref());
            paths.extend(s.groups.as_deref());
            paths.extend(s.human_eval.as_deref());
            paths.extend(s.compare_vocabulary.as_deref());
        }
        paths
    }

    fn validate(&self) -> Result<()> {
        for p in self.inputs() {
            if !p.exists() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if self.corpus.sets.iter().any(|s| !s.tabbed) && self.corpus.image_ids.is_none() {
            bail!("aligned caption sets need corpus.image_ids");
        }
        for m in &self.eval.methods {
            if m.image_embeddings.is_some() != m.caption_embeddings.is_some() {
                bail!("method {} must give both image and caption embeddings or neither", m.name);
            }
        }
        if let Some(b) = &self.eval.baseline {
            if !self.eval.methods.iter().any(|m| &m.name == b) {
                bail!("baseline {b} is not one of the configured methods");
            }
        }
        if let Some(r) = &self.eval.recognition {
            if r.thresholds.is_empty() {
                bail!("eval.recognition.thresholds is empty");
            }
        }
        if self.augment.k == 0 {
            bail!("augment.k must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn minimal(dir: &Path) -> String {
        for f in ["v.json", "t.tsv", "en.token"] {
            write(dir, f, "");
        }
        "seed = 3\nvocabulary = \"v.json\"\ntaxonomy = \"t.tsv\"\n[corpus]\nenglish = \"en.token\"\n".to_string()
    }

    #[test]
    fn toml_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "run.toml", &minimal(dir.path()));
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.vocabulary, dir.path().join("v.json"));
        assert_eq!(c.provider.cache, dir.path().join("cache"));
        assert_eq!(c.augment.k, 100);
    }

    #[test]
    fn json_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        let path = write(
            dir.path(),
            "run.json",
            r#"{"seed": 1, "vocabulary": "v.json", "taxonomy": "t.tsv", "corpus": {"english": "en.token"}}"#,
        );
        assert_eq!(RunConfig::load(&path).unwrap().seed, 1);
    }

    #[test]
    fn missing_seed_or_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text = minimal(dir.path());
        let path = write(dir.path(), "a.toml", &text.replace("seed = 3\n", ""));
        assert!(RunConfig::load(&path).is_err());
        std::fs::remove_file(dir.path().join("t.tsv")).unwrap();
        let path = write(dir.path(), "b.toml", &text);
        let err = RunConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("t.tsv"), "{err}");
    }
}
