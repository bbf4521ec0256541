use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use xlcap::gateway::{Backend, FixtureBackend, HttpBackend, SyntheticBackend};
use xlcap::{
    load_flickr_tokens, make_splits, CacheStore, CaptionFilter, CaptionRecord, CaptionSetFile, CaptionSource, Corpus,
    Gateway, ObjectVocabulary, Split, SplitAssignment, Taxonomy,
};

use crate::config::{ProviderMode, RunConfig};

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    /// Loads the config and copies it into `out`.
    pub fn new(config_path: &Path, out: &Path) -> Result<Self> {
        let config = RunConfig::load(config_path)?;
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let ext = config_path.extension().and_then(|e| e.to_str()).unwrap_or("toml");
        fs::copy(config_path, out.join(format!("run_config.{ext}")))
            .with_context(|| format!("copying {} into {}", config_path.display(), out.display()))?;
        Ok(Self {
            config,
            out: out.to_path_buf(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    pub fn write_jsonl<T: Serialize>(&self, rel: &str, items: &[T]) -> Result<PathBuf> {
        let mut text = String::new();
        for item in items {
            text.push_str(&serde_json::to_string(item)?);
            text.push('\n');
        }
        self.write_text(rel, &text)
    }

    pub fn vocabulary(&self) -> Result<ObjectVocabulary> {
        Ok(ObjectVocabulary::load(&self.config.vocabulary)?)
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        Ok(Taxonomy::load(&self.config.taxonomy)?)
    }

    /// English tokens plus every configured caption set.
    pub fn corpus(&self) -> Result<Corpus> {
        let c = &self.config.corpus;
        let mut corpus = load_flickr_tokens(&c.english, "en")?;
        for set in &c.sets {
            let file = if set.tabbed {
                CaptionSetFile::Tabbed(set.captions.clone())
            } else {
                CaptionSetFile::Aligned {
                    captions: set.captions.clone(),
                    ids: c.image_ids.clone().expect("validated"),
                }
            };
            corpus = corpus
                .attach_caption_set(&file, &set.language, set.source, set.set_index)
                .with_context(|| format!("attaching {}", set.captions.display()))?;
        }
        Ok(corpus)
    }

    pub fn splits(&self, corpus: &Corpus) -> Result<SplitAssignment> {
        Ok(make_splits(corpus, self.config.seed)?)
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let p = &self.config.provider;
        let cache = CacheStore::new(&p.cache);
        let backend: Option<Arc<dyn Backend>> = match p.mode {
            ProviderMode::Replay => None,
            ProviderMode::Synthetic => Some(Arc::new(SyntheticBackend { dim: p.embedding_dim })),
            ProviderMode::Fixture => {
                let Some(path) = &p.recordings else {
                    bail!("provider mode fixture needs provider.recordings");
                };
                Some(Arc::new(FixtureBackend::load(path)?))
            }
            ProviderMode::Http => {
                let Some(endpoint) = &p.endpoint else {
                    bail!("provider mode http needs provider.endpoint");
                };
                Some(Arc::new(HttpBackend::from_env(endpoint.as_str(), Duration::from_secs(p.timeout_secs))))
            }
        };
        Ok(Gateway::new(cache, backend).with_max_in_flight(p.max_in_flight))
    }
}

/// Captions matching `filter`, cloned, in corpus order.
pub fn select(corpus: &Corpus, filter: &CaptionFilter) -> Vec<CaptionRecord> {
    corpus.captions_where(filter).cloned().collect()
}

/// English native captions of one split.
pub fn english_in(corpus: &Corpus, splits: &SplitAssignment, split: Split) -> Vec<CaptionRecord> {
    let filter = CaptionFilter::new()
        .language("en")
        .source(CaptionSource::Native)
        .images(splits.ids(split).clone());
    select(corpus, &filter)
}
