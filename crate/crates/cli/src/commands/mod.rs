//! One function per subcommand. Each rebuilds what it needs from the config
//! so commands can run in any order against a warm cache.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use xlcap::augment::translate_reference_pool;
use xlcap::gateway::EmbedItem;
use xlcap::{mention_profile, CaptionFilter, CaptionSource, Corpus, EmbeddingTable, Gateway, ObjectVocabulary, Split, SplitAssignment};

use crate::context::{english_in, select, Context};

mod augment;
mod eval;

pub use augment::augment;
pub use eval::{eval_recognition, eval_retrieval, eval_stats};

fn write_splits(ctx: &Context, splits: &SplitAssignment) -> Result<()> {
    let [reference, train, val, test] = splits.sizes();
    let line = format!("seed {}: reference {reference}, train {train}, val {val}, test {test}\n", splits.seed);
    print!("{line}");
    ctx.write_json("splits.json", splits)?;
    ctx.write_text("splits.txt", &line)?;
    Ok(())
}

pub fn ingest(ctx: &Context) -> Result<()> {
    let corpus = ctx.corpus()?;
    let splits = ctx.splits(&corpus)?;
    ctx.write_text("corpus.json", &(corpus.to_json_string()? + "\n"))?;
    println!("corpus: {} images, {} captions", corpus.len_images(), corpus.captions.len());
    write_splits(ctx, &splits)
}

pub fn split(ctx: &Context) -> Result<()> {
    let corpus = ctx.corpus()?;
    write_splits(ctx, &ctx.splits(&corpus)?)
}

#[derive(Serialize)]
struct SetMentions {
    language: String,
    source: CaptionSource,
    set_index: Option<u8>,
    vocabulary: String,
    captions: usize,
    mentions: usize,
    profile: BTreeMap<String, usize>,
}

/// Vocabulary file per language: the main one for English, plus the ones
/// named for recognition truth and statistics.
fn vocabularies(ctx: &Context) -> BTreeMap<String, PathBuf> {
    let mut out = BTreeMap::from([("en".to_string(), ctx.config.vocabulary.clone())]);
    if let Some(r) = &ctx.config.eval.recognition {
        if let Some(v) = &r.truth_vocabulary {
            out.insert(r.truth_language.clone(), v.clone());
        }
    }
    if let Some(s) = &ctx.config.eval.stats {
        if let (Some(l), Some(v)) = (&s.compare_language, &s.compare_vocabulary) {
            out.insert(l.clone(), v.clone());
        }
    }
    out
}

pub fn mentions(ctx: &Context) -> Result<()> {
    let corpus = ctx.corpus()?;
    let mut groups: Vec<(String, CaptionSource, Option<u8>)> = corpus
        .captions
        .iter()
        .map(|c| (c.language.clone(), c.source, c.set_index))
        .collect();
    groups.sort();
    groups.dedup();
    let mut out = Vec::new();
    let mut loaded: BTreeMap<PathBuf, ObjectVocabulary> = BTreeMap::new();
    let vocabs = vocabularies(ctx);
    for (language, source, set_index) in groups {
        let Some(path) = vocabs.get(&language) else {
            log::warn!("no vocabulary for language {language}; skipping its caption sets");
            continue;
        };
        if !loaded.contains_key(path) {
            loaded.insert(path.clone(), ObjectVocabulary::load(path)?);
        }
        let vocab = &loaded[path];
        let mut filter = CaptionFilter::new().language(language.as_str()).source(source);
        if let Some(n) = set_index {
            filter = filter.set_index(n);
        }
        let profile = mention_profile(&corpus, vocab, &filter);
        out.push(SetMentions {
            captions: corpus.captions_where(&filter).count(),
            mentions: profile.values().sum(),
            language,
            source,
            set_index,
            vocabulary: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            profile,
        });
    }
    for s in &out {
        let set = s.set_index.map_or("-".to_string(), |n| n.to_string());
        println!("{} {} {set}: {} mentions in {} captions", s.language, s.source, s.mentions, s.captions);
    }
    ctx.write_json("mentions.json", &out)?;
    Ok(())
}

pub fn translate(ctx: &Context) -> Result<()> {
    let corpus = ctx.corpus()?;
    let splits = ctx.splits(&corpus)?;
    let gateway = ctx.gateway()?;
    let english = english_in(&corpus, &splits, Split::Train);
    let tgt = &ctx.config.augment.target_language;
    let translated = translate_reference_pool(&gateway, &english, tgt)
        .with_context(|| format!("translating {} training captions to {tgt}", english.len()))?;
    ctx.write_jsonl("translations.jsonl", &translated)?;
    println!("translated {} captions", translated.len());
    Ok(())
}

/// Test-split images and their evaluation-language native captions, embedded
/// through the provider.
pub(crate) fn embed_test_split(
    ctx: &Context,
    gateway: &Gateway,
    corpus: &Corpus,
    splits: &SplitAssignment,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    let test = splits.ids(Split::Test);
    let images: Vec<EmbedItem> = test.iter().map(|id| EmbedItem::Image { image_id: id.clone() }).collect();
    let mut captions = Vec::new();
    for &n in &ctx.config.eval.sets {
        let filter = CaptionFilter::new()
            .language(ctx.config.eval.language.as_str())
            .source(CaptionSource::Native)
            .set_index(n)
            .images(test.clone());
        captions.extend(select(corpus, &filter).into_iter().map(|c| EmbedItem::Text {
            id: c.caption_id,
            text: c.text,
        }));
    }
    if captions.is_empty() {
        bail!("no {} native captions in the test split", ctx.config.eval.language);
    }
    let images = gateway.embed_batch(&images).context("embedding test images")?;
    let captions = gateway.embed_batch(&captions).context("embedding test captions")?;
    Ok((images, captions))
}

pub fn embed(ctx: &Context) -> Result<()> {
    let corpus = ctx.corpus()?;
    let splits = ctx.splits(&corpus)?;
    let gateway = ctx.gateway()?;
    let (images, captions) = embed_test_split(ctx, &gateway, &corpus, &splits)?;
    ctx.write_text("embeddings/images.tsv", &images.to_tsv_string())?;
    ctx.write_text("embeddings/captions.tsv", &captions.to_tsv_string())?;
    println!("embedded {} images and {} captions", images.len(), captions.len());
    Ok(())
}

/// Text reports in a fixed order.
const REPORT_PARTS: [(&str, &str); 5] = [
    ("Retrieval", "eval/retrieval.txt"),
    ("Recognition", "eval/recognition.txt"),
    ("Statistics", "eval/stats.txt"),
    ("Augmentation", "augment/summary.txt"),
    ("Splits", "splits.txt"),
];

pub fn report(ctx: &Context) -> Result<()> {
    let mut out = String::new();
    for (title, rel) in REPORT_PARTS {
        let path = ctx.path(rel);
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("== {title} ==\n{text}"));
    }
    if out.is_empty() {
        bail!("nothing to report in {}; run eval or augment first", ctx.out.display());
    }
    ctx.write_text("report.txt", &out)?;
    print!("{out}");
    Ok(())
}
