use std::collections::BTreeSet;
use std::fmt::Write as _;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use xlcap::analytics::{
    cross_group_gap_report, group_stats, human_eval_aggregate, load_concept_counts, load_groups, load_human_eval,
    mention_ratio, render_group_table, GapRow, GroupStatsRow, HumanEvalSummary, MentionRatio,
};
use xlcap::recognition::{evaluate_recognition, sweep_threshold_over, truth_from_captions, LabelScoreTable, RecognitionReport, SweepResult};
use xlcap::retrieval::{aggregate_reports, evaluate_set, render_method_table, render_reports};
use xlcap::{
    mention_profile, CaptionFilter, CaptionSource, Corpus, EmbeddingTable, ObjectVocabulary, RetrievalReport, Split,
};

use super::embed_test_split;
use crate::config::MethodConfig;
use crate::context::Context;

#[derive(Serialize)]
struct MethodResult {
    name: String,
    embeddings: &'static str,
    sets: Vec<RetrievalReport>,
    aggregate: RetrievalReport,
}

#[derive(Serialize)]
struct RetrievalOutput {
    baseline: Option<String>,
    language: String,
    methods: Vec<MethodResult>,
}

/// Per-set reports over the images of `images`, one per configured native set.
fn score_method(
    ctx: &Context,
    corpus: &Corpus,
    images: &EmbeddingTable,
    captions: &EmbeddingTable,
) -> Result<Vec<RetrievalReport>> {
    let pairing = corpus.pairing();
    let image_ids: BTreeSet<String> = images.ids().iter().cloned().collect();
    let mut reports = Vec::new();
    for &n in &ctx.config.eval.sets {
        let filter = CaptionFilter::new()
            .language(ctx.config.eval.language.as_str())
            .source(CaptionSource::Native)
            .set_index(n)
            .images(image_ids.clone());
        let ids: Vec<&str> = corpus.captions_where(&filter).map(|c| c.caption_id.as_str()).collect();
        if ids.is_empty() {
            bail!("no {} native captions of set {n} for the evaluated images", ctx.config.eval.language);
        }
        let set = captions.select(&ids)?;
        reports.push(evaluate_set(images, &set, &pairing, &format!("{}-native-{n}", ctx.config.eval.language))?);
    }
    Ok(reports)
}

pub fn eval_retrieval(ctx: &Context) -> Result<()> {
    let methods = &ctx.config.eval.methods;
    if methods.is_empty() {
        bail!("no eval.methods configured");
    }
    let corpus = ctx.corpus()?;
    let mut provider_tables = None;
    let mut results = Vec::new();
    for MethodConfig {
        name,
        image_embeddings,
        caption_embeddings,
    } in methods
    {
        let (images, captions, source) = match (image_embeddings, caption_embeddings) {
            (Some(i), Some(c)) => (
                EmbeddingTable::load(i).with_context(|| format!("method {name}"))?,
                EmbeddingTable::load(c).with_context(|| format!("method {name}"))?,
                "file",
            ),
            _ => {
                if provider_tables.is_none() {
                    let splits = ctx.splits(&corpus)?;
                    let gateway = ctx.gateway()?;
                    provider_tables = Some(embed_test_split(ctx, &gateway, &corpus, &splits)?);
                }
                let (i, c) = provider_tables.clone().expect("just filled");
                (i, c, "provider")
            }
        };
        let sets = score_method(ctx, &corpus, &images, &captions).with_context(|| format!("method {name}"))?;
        let aggregate = aggregate_reports(&sets)?;
        results.push(MethodResult {
            name: name.clone(),
            embeddings: source,
            sets,
            aggregate,
        });
    }

    let rows: Vec<(String, RetrievalReport)> = results.iter().map(|m| (m.name.clone(), m.aggregate.clone())).collect();
    let mut text = render_method_table(&rows, ctx.config.eval.baseline.as_deref());
    for m in &results {
        let _ = write!(text, "\n{}\n{}", m.name, render_reports(&m.sets));
        let _ = writeln!(text, "{}", render_reports(std::slice::from_ref(&m.aggregate)).lines().nth(1).unwrap_or(""));
    }
    ctx.write_json(
        "eval/retrieval.json",
        &RetrievalOutput {
            baseline: ctx.config.eval.baseline.clone(),
            language: ctx.config.eval.language.clone(),
            methods: results,
        },
    )?;
    ctx.write_text("eval/retrieval.txt", &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct RecognitionOutput {
    sweep: SweepResult,
    val_images: usize,
    test_images: usize,
    report: RecognitionReport,
}

pub fn eval_recognition(ctx: &Context) -> Result<()> {
    let Some(rc) = &ctx.config.eval.recognition else {
        bail!("eval.recognition is not configured");
    };
    let corpus = ctx.corpus()?;
    let splits = ctx.splits(&corpus)?;
    let vocab = ctx.vocabulary()?;
    let truth_vocab = match &rc.truth_vocabulary {
        Some(p) => ObjectVocabulary::load(p)?,
        None => vocab.clone(),
    };
    let mut filter = CaptionFilter::new()
        .language(rc.truth_language.as_str())
        .source(CaptionSource::Native);
    if let Some(n) = rc.truth_set {
        filter = filter.set_index(n);
    }
    let val = LabelScoreTable::load(&rc.val_scores)?;
    let test = LabelScoreTable::load(&rc.test_scores)?;
    let ids = |t: &LabelScoreTable| t.image_ids().iter().cloned().collect::<BTreeSet<_>>();
    let val_truth = truth_from_captions(&corpus, &truth_vocab, &filter, &ids(&val));
    let test_truth = truth_from_captions(&corpus, &truth_vocab, &filter, &ids(&test));

    let sweep = sweep_threshold_over(&val, &val_truth, &rc.thresholds).context("validation sweep")?;
    let train_filter = filter.clone().images(splits.ids(Split::Train).clone());
    let train_mentions = mention_profile(&corpus, &truth_vocab, &train_filter);
    let report = evaluate_recognition(&test, &test_truth, sweep.threshold, &vocab, &train_mentions)?;

    let mut text = String::from("threshold\tval micro-F1\n");
    for (t, f1) in &sweep.curve {
        let _ = writeln!(text, "{t}\t{f1:.4}");
    }
    let _ = writeln!(text, "selected threshold {} (val F1 {:.4})\n", sweep.threshold, sweep.f1);
    text.push_str(&report.render_table());
    ctx.write_json(
        "eval/recognition.json",
        &RecognitionOutput {
            val_images: val.image_ids().len(),
            test_images: test.image_ids().len(),
            sweep,
            report,
        },
    )?;
    ctx.write_text("eval/recognition.txt", &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct GroupSection {
    stats: Vec<GroupStatsRow>,
    gaps: Vec<GapRow>,
    all_gaps_exceed_stdev: bool,
}

#[derive(Serialize)]
struct MentionSection {
    language_a: String,
    language_b: String,
    ratio: MentionRatio,
}

#[derive(Serialize, Default)]
struct StatsOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    concept_groups: Option<GroupSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    human_eval: Option<Vec<HumanEvalSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mentions: Option<MentionSection>,
}

pub fn eval_stats(ctx: &Context) -> Result<()> {
    let Some(sc) = &ctx.config.eval.stats else {
        bail!("eval.stats is not configured");
    };
    let mut out = StatsOutput::default();
    let mut text = String::new();

    if let (Some(counts), Some(groups)) = (&sc.concept_counts, &sc.groups) {
        let rows = load_concept_counts(counts)?;
        let groups = load_groups(groups)?;
        let stats = group_stats(&rows, &groups)?;
        let gaps = cross_group_gap_report(&stats);
        text.push_str("Concept frequency per language group, mean (stdev)\n");
        text.push_str(&render_group_table(&stats, &gaps));
        let flagged = gaps.iter().filter(|g| g.gap_exceeds_stdev).count();
        let _ = writeln!(text, "gap > pooled stdev for {flagged} of {} concepts\n", gaps.len());
        out.concept_groups = Some(GroupSection {
            all_gaps_exceed_stdev: flagged == gaps.len(),
            stats,
            gaps,
        });
    }

    if let Some(path) = &sc.human_eval {
        let summaries = load_human_eval(path)?
            .iter()
            .map(human_eval_aggregate)
            .collect::<xlcap::Result<Vec<_>>>()?;
        text.push_str("Human evaluation\nset\tn\tternary\tbinary\n");
        for s in &summaries {
            let _ = writeln!(text, "{}\t{}\t{:.2}\t{:.2}", s.set_label, s.n, s.ternary_mean, s.binary_mean);
        }
        text.push('\n');
        out.human_eval = Some(summaries);
    }

    if let (Some(lang), Some(vocab_path)) = (&sc.compare_language, &sc.compare_vocabulary) {
        let corpus = ctx.corpus()?;
        let en = mention_profile(
            &corpus,
            &ctx.vocabulary()?,
            &CaptionFilter::new().language("en").source(CaptionSource::Native),
        );
        let other = mention_profile(
            &corpus,
            &ObjectVocabulary::load(vocab_path)?,
            &CaptionFilter::new().language(lang.as_str()).source(CaptionSource::Native),
        );
        let ratio = mention_ratio(&en, &other)?;
        let _ = writeln!(
            text,
            "Vocabulary mentions, en vs. {lang} natives: ratio {:.2} ({:.2} over shared classes)",
            ratio.overall, ratio.overall_finite
        );
        text.push_str("class\ten\tother\t% more\n");
        for (class, e) in &ratio.per_class {
            let pct = e.percent_more().map_or("inf".to_string(), |p| format!("{p:.0}"));
            let _ = writeln!(text, "{class}\t{}\t{}\t{pct}", e.count_a, e.count_b);
        }
        out.mentions = Some(MentionSection {
            language_a: "en".into(),
            language_b: lang.clone(),
            ratio,
        });
    }

    if text.is_empty() {
        bail!("eval.stats names no inputs");
    }
    ctx.write_json("eval/stats.json", &out)?;
    ctx.write_text("eval/stats.txt", &text)?;
    print!("{text}");
    Ok(())
}
