//! Caption augmentation: HYPER (hypernym substitution) and the PARA-RND /
//! PARA-TGT paraphrase strategies, plus PARA-CMB dataset merging.

mod pipeline;
mod prompt;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CaptionRecord, CaptionSource};
use crate::error::{Error, Result};
use crate::taxonomy::{HypernymConfig, Taxonomy};
use crate::text::capitalize_first;
use crate::vocab::{pluralize, ObjectVocabulary};

pub use pipeline::{
    run_hyper, run_para_rnd, run_para_tgt, translate_augmented, translate_reference_pool, AugmentConfig,
    CaptionFailure, FailureKind, PipelineSummary,
};
pub use prompt::{
    build_para_rnd_prompt, build_para_tgt_prompt, parse_final, parse_plain, sample_references, PromptBundle,
    TemplateId, PARA_RND_TEMPLATE, PARA_TGT_TEMPLATE, SYSTEM_PROMPT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Hyper,
    ParaRnd,
    ParaTgt,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Hyper => "hyper",
            Strategy::ParaRnd => "para_rnd",
            Strategy::ParaTgt => "para_tgt",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One step that turned the parent caption into the augmented one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEdit {
    Hypernym {
        class_name: String,
        surface: String,
        token_start: usize,
        token_end: usize,
        source_synset: String,
        ancestor_synset: String,
        lemma: String,
        replacement: String,
    },
    Prompt {
        template_id: TemplateId,
        request_key: String,
        attempt: u32,
        ref_caption_ids: Vec<String>,
        model_name: String,
        settings: serde_json::Value,
    },
    Translate {
        request_key: String,
        model_name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedCaption {
    pub parent_caption_id: String,
    pub image_id: String,
    pub strategy: Strategy,
    pub text_en: String,
    #[serde(default)]
    pub text_target: Option<String>,
    #[serde(default)]
    pub target_language: Option<String>,
    pub trace: Vec<TraceEdit>,
}

impl AugmentedCaption {
    pub fn derivation(&self) -> String {
        format!("{}:{}", self.strategy, self.parent_caption_id)
    }

    /// Target-language record for training data; requires a translation.
    pub fn to_record(&self) -> Result<CaptionRecord> {
        let (Some(text), Some(lang)) = (&self.text_target, &self.target_language) else {
            return Err(Error::Precondition(format!(
                "{} caption from {} has not been translated",
                self.strategy, self.parent_caption_id
            )));
        };
        CaptionRecord::new(
            self.image_id.clone(),
            lang.clone(),
            text,
            CaptionSource::Augmented,
            None,
            Some(self.derivation()),
        )
    }
}

/// Generator for one caption, derived from the run seed and the caption id
/// so results do not depend on processing order.
pub fn caption_rng(seed: u64, caption_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(caption_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperConfig {
    #[serde(default)]
    pub hypernym: HypernymConfig,
    /// Cap on substitutions per caption; `None` replaces every eligible mention.
    #[serde(default)]
    pub max_replacements: Option<usize>,
}

/// Replaces object mentions with hypernym lemmas drawn from the taxonomy.
///
/// Mentions whose class lacks a synset, or whose synset has no eligible
/// ancestor, are left alone. Plural mentions get a pluralized lemma and a
/// capitalized surface keeps its capital. Returns `None` when the text did
/// not change.
pub fn hypernymize_caption<R: Rng + ?Sized>(
    caption: &CaptionRecord,
    vocab: &ObjectVocabulary,
    taxonomy: &Taxonomy,
    config: &HyperConfig,
    rng: &mut R,
) -> Result<Option<AugmentedCaption>> {
    if caption.language != "en" {
        return Err(Error::Precondition(format!(
            "caption {} is {}, hypernymization expects English",
            caption.caption_id, caption.language
        )));
    }
    let limit = config.max_replacements.unwrap_or(usize::MAX);
    let mut edits = Vec::new();
    let mut splices = Vec::new();
    for m in vocab.detect_mentions(&caption.text) {
        if edits.len() >= limit {
            break;
        }
        let Some(synset) = vocab.class(&m.class_name).and_then(|c| c.synset_id.clone()) else {
            continue;
        };
        let draw = match taxonomy.sample_hypernym_lemma(&synset, &config.hypernym, rng) {
            Ok(d) => d,
            Err(Error::NotFound(_) | Error::NoHypernym(_)) => continue,
            Err(e) => return Err(e),
        };
        let original = &caption.text[m.byte_start..m.byte_end];
        let mut replacement = if m.plural { pluralize(&draw.lemma) } else { draw.lemma.clone() };
        if original.starts_with(char::is_uppercase) {
            replacement = capitalize_first(&replacement);
        }
        splices.push((m.byte_start, m.byte_end, replacement.clone()));
        edits.push(TraceEdit::Hypernym {
            class_name: m.class_name,
            surface: original.to_string(),
            token_start: m.token_start,
            token_end: m.token_end,
            source_synset: synset,
            ancestor_synset: draw.synset_id,
            lemma: draw.lemma,
            replacement,
        });
    }
    let mut text = caption.text.clone();
    for (start, end, replacement) in splices.iter().rev() {
        text.replace_range(*start..*end, replacement);
    }
    if edits.is_empty() || text == caption.text {
        return Ok(None);
    }
    Ok(Some(AugmentedCaption {
        parent_caption_id: caption.caption_id.clone(),
        image_id: caption.image_id.clone(),
        strategy: Strategy::Hyper,
        text_en: text,
        text_target: None,
        target_language: None,
        trace: edits,
    }))
}

/// Re-checks a HYPER output against the taxonomy: every edit must swap a
/// mention of its class for a lemma of a strict non-root ancestor of the
/// class synset, and the text must differ from the parent.
pub fn verify_hypernym_edits(
    augmented: &AugmentedCaption,
    parent: &CaptionRecord,
    vocab: &ObjectVocabulary,
    taxonomy: &Taxonomy,
) -> Result<()> {
    let fail = |msg: String| Err(Error::Integrity(format!("{}: {msg}", augmented.parent_caption_id)));
    if augmented.text_en == parent.text {
        return fail("text unchanged".into());
    }
    if augmented.trace.is_empty() {
        return fail("empty trace".into());
    }
    for edit in &augmented.trace {
        let TraceEdit::Hypernym {
            class_name,
            source_synset,
            ancestor_synset,
            lemma,
            replacement,
            ..
        } = edit
        else {
            continue;
        };
        if vocab.class(class_name).and_then(|c| c.synset_id.as_deref()) != Some(source_synset.as_str()) {
            return fail(format!("{class_name} does not map to {source_synset}"));
        }
        if !taxonomy.ancestor_set(source_synset, true)?.contains(ancestor_synset) {
            return fail(format!("{ancestor_synset} is not a non-root ancestor of {source_synset}"));
        }
        let lemmas = &taxonomy.get(ancestor_synset).expect("ancestor exists").lemmas;
        if !lemmas.iter().any(|l| l.replace('_', " ") == *lemma) {
            return fail(format!("{lemma} is not a lemma of {ancestor_synset}"));
        }
        let r = replacement.to_lowercase();
        if r != lemma.to_lowercase() && r != pluralize(lemma).to_lowercase() {
            return fail(format!("replacement {replacement} is not a form of {lemma}"));
        }
    }
    Ok(())
}

/// Base captions followed by every translated augmentation, dropping repeats
/// of an (image, text) pair after its first occurrence.
pub fn combine_datasets(base: &[CaptionRecord], extras: &[Vec<AugmentedCaption>]) -> Result<Vec<CaptionRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in base {
        if seen.insert((record.image_id.clone(), record.text.clone())) {
            out.push(record.clone());
        }
    }
    for aug in extras.iter().flatten() {
        let record = aug.to_record()?;
        if seen.insert((record.image_id.clone(), record.text.clone())) {
            out.push(record);
        }
    }
    Ok(out)
}
