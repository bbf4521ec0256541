//! Runs a strategy over many captions through the gateway.
//!
//! Work fans out across captions with rayon. Each caption draws from its own
//! generator (see [`caption_rng`]) and results keep input order, so output is
//! the same for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prompt::{build_para_rnd_prompt, build_para_tgt_prompt, parse_final, parse_plain, sample_references, PromptBundle};
use super::{caption_rng, hypernymize_caption, AugmentedCaption, HyperConfig, Strategy, TraceEdit};
use crate::corpus::{CaptionRecord, CaptionSource};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, ProviderRequest, ProviderResponse};
use crate::taxonomy::Taxonomy;
use crate::vocab::ObjectVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub seed: u64,
    /// References per PARA-TGT prompt.
    pub k: usize,
    pub hyper: HyperConfig,
    pub source_language: String,
    pub target_language: String,
    /// Extra chat attempts after an unparseable reply.
    pub parse_retries: u32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: 100,
            hyper: HyperConfig::default(),
            source_language: "en".into(),
            target_language: "de".into(),
            parse_retries: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The model reply could not be parsed within the retry budget; the caption is dropped.
    Parse,
    /// The backend failed or the cache had no entry in replay mode.
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionFailure {
    pub caption_id: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub strategy: Strategy,
    pub inputs: usize,
    pub emitted: usize,
    /// HYPER inputs without a replaceable mention.
    pub unchanged: usize,
    pub parse_dropped: usize,
    pub provider_failed: usize,
    pub failures: Vec<CaptionFailure>,
}

impl PipelineSummary {
    fn new(strategy: Strategy, inputs: usize) -> Self {
        Self {
            strategy,
            inputs,
            emitted: 0,
            unchanged: 0,
            parse_dropped: 0,
            provider_failed: 0,
            failures: Vec::new(),
        }
    }

    pub fn record_failure(&mut self, failure: CaptionFailure) {
        match failure.kind {
            FailureKind::Parse => self.parse_dropped += 1,
            FailureKind::Provider => self.provider_failed += 1,
        }
        self.failures.push(failure);
    }
}

type Outcome = std::result::Result<Option<AugmentedCaption>, CaptionFailure>;

fn collect(strategy: Strategy, outcomes: Vec<Outcome>) -> (Vec<AugmentedCaption>, PipelineSummary) {
    let mut summary = PipelineSummary::new(strategy, outcomes.len());
    let mut out = Vec::new();
    for o in outcomes {
        match o {
            Ok(Some(a)) => out.push(a),
            Ok(None) => summary.unchanged += 1,
            Err(f) => summary.record_failure(f),
        }
    }
    summary.emitted = out.len();
    log::info!(
        "{strategy}: {} in, {} out, {} unchanged, {} parse drops, {} provider failures",
        summary.inputs,
        summary.emitted,
        summary.unchanged,
        summary.parse_dropped,
        summary.provider_failed
    );
    (out, summary)
}

pub fn run_hyper(
    captions: &[CaptionRecord],
    vocab: &ObjectVocabulary,
    taxonomy: &Taxonomy,
    config: &AugmentConfig,
) -> Result<(Vec<AugmentedCaption>, PipelineSummary)> {
    let outcomes = captions
        .par_iter()
        .map(|c| {
            let mut rng = caption_rng(config.seed, &c.caption_id);
            hypernymize_caption(c, vocab, taxonomy, &config.hyper, &mut rng).map(Ok)
        })
        .collect::<Result<Vec<Outcome>>>()?;
    Ok(collect(Strategy::Hyper, outcomes))
}

fn provider_failure(caption_id: &str, e: &Error) -> CaptionFailure {
    CaptionFailure {
        caption_id: caption_id.to_string(),
        kind: FailureKind::Provider,
        message: e.to_string(),
    }
}

fn prompt_edit(bundle: &PromptBundle, attempt: u32, resp: &ProviderResponse) -> TraceEdit {
    TraceEdit::Prompt {
        template_id: bundle.template_id,
        request_key: resp.request_key.clone(),
        attempt,
        ref_caption_ids: bundle.ref_caption_ids.clone(),
        model_name: resp.provider_meta.model_name.clone(),
        settings: resp.provider_meta.settings.clone(),
    }
}

/// Sends the prompt, re-asking with a fresh cache key when the reply does not parse.
fn paraphrase(
    gateway: &Gateway,
    caption: &CaptionRecord,
    bundle: &PromptBundle,
    strategy: Strategy,
    retries: u32,
) -> Outcome {
    let parse = match strategy {
        Strategy::ParaTgt => parse_final,
        _ => parse_plain,
    };
    let mut last_error = String::new();
    for attempt in 0..=retries {
        let (reply, resp) = gateway
            .chat(&bundle.system, &bundle.user, attempt)
            .map_err(|e| provider_failure(&caption.caption_id, &e))?;
        match parse(&reply) {
            Ok(text) => {
                return Ok(Some(AugmentedCaption {
                    parent_caption_id: caption.caption_id.clone(),
                    image_id: caption.image_id.clone(),
                    strategy,
                    text_en: text,
                    text_target: None,
                    target_language: None,
                    trace: vec![prompt_edit(bundle, attempt, &resp)],
                }))
            }
            Err(e) => {
                log::debug!("{}: attempt {attempt}: {e}", caption.caption_id);
                last_error = e.to_string();
            }
        }
    }
    Err(CaptionFailure {
        caption_id: caption.caption_id.clone(),
        kind: FailureKind::Parse,
        message: last_error,
    })
}

pub fn run_para_rnd(
    captions: &[CaptionRecord],
    gateway: &Gateway,
    config: &AugmentConfig,
) -> Result<(Vec<AugmentedCaption>, PipelineSummary)> {
    let bundles = captions.iter().map(build_para_rnd_prompt).collect::<Result<Vec<_>>>()?;
    let outcomes = captions
        .par_iter()
        .zip(&bundles)
        .map(|(c, b)| paraphrase(gateway, c, b, Strategy::ParaRnd, config.parse_retries))
        .collect();
    Ok(collect(Strategy::ParaRnd, outcomes))
}

/// `pool` holds English renderings of the reference captions.
pub fn run_para_tgt(
    captions: &[CaptionRecord],
    pool: &[CaptionRecord],
    vocab: &ObjectVocabulary,
    gateway: &Gateway,
    config: &AugmentConfig,
) -> Result<(Vec<AugmentedCaption>, PipelineSummary)> {
    let bundles = captions
        .par_iter()
        .map(|c| {
            let mut rng = caption_rng(config.seed, &c.caption_id);
            let refs: Vec<(String, String)> = sample_references(c, pool, vocab, config.k, &mut rng)?
                .into_iter()
                .map(|r| (r.caption_id.clone(), r.text.clone()))
                .collect();
            build_para_tgt_prompt(c, &refs)
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes = captions
        .par_iter()
        .zip(&bundles)
        .map(|(c, b)| paraphrase(gateway, c, b, Strategy::ParaTgt, config.parse_retries))
        .collect();
    Ok(collect(Strategy::ParaTgt, outcomes))
}

/// Machine-translates reference captions into `tgt`, keeping image ids.
pub fn translate_reference_pool(gateway: &Gateway, captions: &[CaptionRecord], tgt: &str) -> Result<Vec<CaptionRecord>> {
    let requests: Vec<ProviderRequest> = captions
        .iter()
        .map(|c| ProviderRequest::translate(&c.language, tgt, &c.text))
        .collect();
    let mut out = Vec::with_capacity(captions.len());
    let mut failed = Vec::new();
    let mut first_error = None;
    for (i, (c, r)) in captions.iter().zip(gateway.call_many(&requests)).enumerate() {
        let record = r.and_then(|resp| {
            let text = resp.body["text"].as_str().unwrap_or_default();
            CaptionRecord::new(c.image_id.clone(), tgt, text, CaptionSource::MachineTranslated, None, None)
        });
        match record {
            Ok(rec) => out.push(rec),
            Err(e) => {
                failed.push(i);
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    match first_error {
        None => Ok(out),
        Some(message) => Err(Error::Batch { indices: failed, message }),
    }
}

/// Fills `text_target` by translating `text_en`. Captions whose translation
/// fails are dropped and reported.
pub fn translate_augmented(
    gateway: &Gateway,
    augmented: Vec<AugmentedCaption>,
    config: &AugmentConfig,
) -> (Vec<AugmentedCaption>, Vec<CaptionFailure>) {
    let requests: Vec<ProviderRequest> = augmented
        .iter()
        .map(|a| ProviderRequest::translate(&config.source_language, &config.target_language, &a.text_en))
        .collect();
    let mut out = Vec::with_capacity(augmented.len());
    let mut failures = Vec::new();
    for (mut a, r) in augmented.into_iter().zip(gateway.call_many(&requests)) {
        let text = r.and_then(|resp| {
            let t = resp.body["text"]
                .as_str()
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .ok_or_else(|| Error::Protocol(format!("translation {} is empty", resp.request_key)))?;
            Ok((t.to_string(), resp))
        });
        match text {
            Ok((t, resp)) => {
                a.text_target = Some(t);
                a.target_language = Some(config.target_language.clone());
                a.trace.push(TraceEdit::Translate {
                    request_key: resp.request_key,
                    model_name: resp.provider_meta.model_name,
                });
                out.push(a);
            }
            Err(e) => failures.push(provider_failure(&a.parent_caption_id, &e)),
        }
    }
    (out, failures)
}
