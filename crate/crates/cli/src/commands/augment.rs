use std::collections::HashMap;
use std::fmt::Write as _;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use xlcap::augment::{
    combine_datasets, run_hyper, run_para_rnd, run_para_tgt, translate_augmented, translate_reference_pool,
    verify_hypernym_edits, AugmentConfig, AugmentedCaption, PipelineSummary, Strategy,
};
use xlcap::{CaptionFilter, CaptionRecord, CaptionSource, Corpus, Gateway, Split, SplitAssignment};

use crate::config::StrategyChoice;
use crate::context::{english_in, select, Context};

struct Inputs {
    corpus: Corpus,
    splits: SplitAssignment,
    train_en: Vec<CaptionRecord>,
    config: AugmentConfig,
}

/// English renderings of the native reference-split captions that PARA-TGT
/// draws its examples from.
fn reference_pool(ctx: &Context, gateway: &Gateway, inputs: &Inputs) -> Result<Vec<CaptionRecord>> {
    let aug = &ctx.config.augment;
    let filter = CaptionFilter::new()
        .language(aug.target_language.as_str())
        .source(CaptionSource::Native)
        .set_index(aug.reference_set)
        .images(inputs.splits.ids(Split::Reference).clone());
    let natives = select(&inputs.corpus, &filter);
    if natives.is_empty() {
        bail!(
            "no native {} captions of set {} in the reference split",
            aug.target_language,
            aug.reference_set
        );
    }
    translate_reference_pool(gateway, &natives, "en").context("translating the reference pool to English")
}

fn run_one(
    ctx: &Context,
    strategy: Strategy,
    inputs: &Inputs,
    gateway: &Gateway,
) -> Result<(Vec<AugmentedCaption>, PipelineSummary)> {
    let (augmented, mut summary) = match strategy {
        Strategy::Hyper => {
            let vocab = ctx.vocabulary()?;
            let taxonomy = ctx.taxonomy()?;
            let (out, summary) = run_hyper(&inputs.train_en, &vocab, &taxonomy, &inputs.config)?;
            let parents: HashMap<&str, &CaptionRecord> =
                inputs.train_en.iter().map(|c| (c.caption_id.as_str(), c)).collect();
            for a in &out {
                verify_hypernym_edits(a, parents[a.parent_caption_id.as_str()], &vocab, &taxonomy)?;
            }
            (out, summary)
        }
        Strategy::ParaRnd => run_para_rnd(&inputs.train_en, gateway, &inputs.config)?,
        Strategy::ParaTgt => {
            let vocab = ctx.vocabulary()?;
            let pool = reference_pool(ctx, gateway, inputs)?;
            run_para_tgt(&inputs.train_en, &pool, &vocab, gateway, &inputs.config)?
        }
    };
    let (translated, failures) = translate_augmented(gateway, augmented, &inputs.config);
    for f in failures {
        summary.record_failure(f);
    }
    summary.emitted = translated.len();
    Ok((translated, summary))
}

#[derive(Serialize)]
struct CmbSummary {
    strategies: Vec<Strategy>,
    extras: usize,
    lines: usize,
    duplicates_removed: usize,
}

fn summary_line(s: &PipelineSummary) -> String {
    format!(
        "{}: {} inputs, {} emitted, {} unchanged, {} parse drops, {} provider failures\n",
        s.strategy, s.inputs, s.emitted, s.unchanged, s.parse_dropped, s.provider_failed
    )
}

pub fn augment(ctx: &Context, choice: StrategyChoice) -> Result<()> {
    let corpus = ctx.corpus()?;
    let splits = ctx.splits(&corpus)?;
    let train_en = english_in(&corpus, &splits, Split::Train);
    let inputs = Inputs {
        config: ctx.config.augment.core_config(ctx.config.seed),
        corpus,
        splits,
        train_en,
    };
    let gateway = ctx.gateway()?;
    let strategies = choice.strategies(ctx.config.augment.cmb_includes_hyper);

    let mut text = String::new();
    let mut outputs = Vec::new();
    let mut provider_failed = 0;
    for strategy in &strategies {
        let (augmented, summary) = run_one(ctx, *strategy, &inputs, &gateway)?;
        let name = strategy.as_str();
        ctx.write_jsonl(&format!("augment/{name}.jsonl"), &augmented)?;
        ctx.write_jsonl(&format!("augment/{name}.failures.jsonl"), &summary.failures)?;
        ctx.write_json(&format!("augment/{name}.summary.json"), &summary)?;
        text.push_str(&summary_line(&summary));
        provider_failed += summary.provider_failed;
        outputs.push(augmented);
    }

    if choice == StrategyChoice::Cmb {
        let records = combine_datasets(&[], &outputs)?;
        let extras: usize = outputs.iter().map(Vec::len).sum();
        let cmb = CmbSummary {
            strategies: strategies.clone(),
            extras,
            lines: records.len(),
            duplicates_removed: extras - records.len(),
        };
        ctx.write_jsonl("augment/cmb.jsonl", &records)?;
        ctx.write_json("augment/cmb.summary.json", &cmb)?;
        let _ = writeln!(
            text,
            "cmb: {} lines from {} augmented captions ({} duplicates removed)",
            cmb.lines, cmb.extras, cmb.duplicates_removed
        );
    }
    ctx.write_text("augment/summary.txt", &text)?;
    print!("{text}");
    if provider_failed > 0 {
        bail!("{provider_failed} captions failed at the provider; see augment/*.failures.jsonl");
    }
    Ok(())
}
