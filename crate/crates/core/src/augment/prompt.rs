//! Paraphrase prompts, reference sampling and reply parsing.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CaptionRecord;
use crate::error::{Error, Result};
use crate::vocab::ObjectVocabulary;

pub const SYSTEM_PROMPT: &str = include_str!("../../assets/prompts/system.txt");
pub const PARA_RND_TEMPLATE: &str = include_str!("../../assets/prompts/para_rnd.txt");
/// Contains `{ref_caps}` and `{example}` placeholders.
pub const PARA_TGT_TEMPLATE: &str = include_str!("../../assets/prompts/para_tgt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ParaRnd,
    ParaTgt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub template_id: TemplateId,
    pub ref_caption_ids: Vec<String>,
}

fn require_english(caption: &CaptionRecord) -> Result<()> {
    if caption.language == "en" {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "caption {} is {}, paraphrasing expects English",
            caption.caption_id, caption.language
        )))
    }
}

pub fn build_para_rnd_prompt(caption: &CaptionRecord) -> Result<PromptBundle> {
    require_english(caption)?;
    Ok(PromptBundle {
        system: SYSTEM_PROMPT.to_string(),
        user: format!("{PARA_RND_TEMPLATE}\n{}", caption.text),
        template_id: TemplateId::ParaRnd,
        ref_caption_ids: Vec::new(),
    })
}

/// `refs` are `(caption_id, English text)` pairs.
pub fn build_para_tgt_prompt(caption: &CaptionRecord, refs: &[(String, String)]) -> Result<PromptBundle> {
    require_english(caption)?;
    if refs.is_empty() {
        return Err(Error::Precondition(format!(
            "targeted paraphrase of {} needs at least one reference caption",
            caption.caption_id
        )));
    }
    let quoted: Vec<String> = refs.iter().map(|(_, t)| format!("\"{t}\"")).collect();
    let ref_caps = format!("[{}]", quoted.join(", "));
    // split on the placeholders so braces inside captions are never substituted
    let (head, tail) = PARA_TGT_TEMPLATE.split_once("{ref_caps}").expect("template has {ref_caps}");
    let (middle, end) = tail.split_once("{example}").expect("template has {example}");
    let user = format!("{head}{ref_caps}{middle}{}{end}", caption.text);
    Ok(PromptBundle {
        system: SYSTEM_PROMPT.to_string(),
        user,
        template_id: TemplateId::ParaTgt,
        ref_caption_ids: refs.iter().map(|(id, _)| id.clone()).collect(),
    })
}

/// Up to `k` pool captions, preferring those that share a non-person class
/// with `caption`.
///
/// Sharers are drawn first, uniformly without replacement; when there are
/// fewer than `k` of them the rest is filled uniformly from the other pool
/// captions.
pub fn sample_references<'a, R: Rng + ?Sized>(
    caption: &CaptionRecord,
    pool: &'a [CaptionRecord],
    vocab: &ObjectVocabulary,
    k: usize,
    rng: &mut R,
) -> Result<Vec<&'a CaptionRecord>> {
    if pool.is_empty() {
        return Err(Error::Precondition("reference pool is empty".into()));
    }
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let wanted = vocab.non_person_classes(&caption.text);
    let (sharers, others): (Vec<&CaptionRecord>, Vec<&CaptionRecord>) = pool
        .iter()
        .partition(|c| !wanted.is_empty() && shares_class(&wanted, &vocab.non_person_classes(&c.text)));
    let mut out = draw(&sharers, k, rng);
    let rest = k - out.len();
    out.extend(draw(&others, rest, rng));
    Ok(out)
}

fn shares_class(a: &BTreeSet<String>, b: &BTreeSet<String>) -> bool {
    a.intersection(b).next().is_some()
}

fn draw<'a, R: Rng + ?Sized>(items: &[&'a CaptionRecord], n: usize, rng: &mut R) -> Vec<&'a CaptionRecord> {
    let n = n.min(items.len());
    sample(rng, items.len(), n).into_iter().map(|i| items[i]).collect()
}

/// Trimmed content of the first `<final>...</final>` pair.
pub fn parse_final(output: &str) -> Result<String> {
    let start = output
        .find("<final>")
        .ok_or_else(|| Error::ModelOutput("no <final> tag".into()))?
        + "<final>".len();
    let len = output[start..]
        .find("</final>")
        .ok_or_else(|| Error::ModelOutput("unclosed <final> tag".into()))?;
    let text = output[start..start + len].trim();
    if text.is_empty() {
        return Err(Error::ModelOutput("empty <final> block".into()));
    }
    Ok(text.to_string())
}

/// Strips code fences, surrounding quotes and whitespace from a one-line reply.
pub fn parse_plain(output: &str) -> Result<String> {
    let lines: Vec<&str> = output
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .collect();
    match lines.as_slice() {
        [] => Err(Error::ModelOutput("empty reply".into())),
        [line] => {
            let text = strip_quotes(line).trim();
            if text.is_empty() {
                Err(Error::ModelOutput("empty reply".into()))
            } else {
                Ok(text.to_string())
            }
        }
        _ => Err(Error::ModelOutput(format!("expected one line, got {}", lines.len()))),
    }
}

fn strip_quotes(s: &str) -> &str {
    for q in ["\"\"\"", "'''", "\"", "'", "\u{201c}"] {
        let close = if q == "\u{201c}" { "\u{201d}" } else { q };
        if s.len() >= q.len() + close.len() {
            if let Some(inner) = s.strip_prefix(q).and_then(|r| r.strip_suffix(close)) {
                return inner;
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CaptionSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn en(image: &str, text: &str) -> CaptionRecord {
        CaptionRecord::new(image, "en", text, CaptionSource::MachineTranslated, None, None).unwrap()
    }

    fn native(image: &str, text: &str) -> CaptionRecord {
        CaptionRecord::new(image, "en", text, CaptionSource::Native, Some(0), None).unwrap()
    }

    fn vocab() -> ObjectVocabulary {
        ObjectVocabulary::from_json_str(
            r#"[{"name":"dog","synonyms":["puppy"],"supercategory":"animal"},
                {"name":"person","synonyms":["man","woman"],"supercategory":"person","is_person":true},
                {"name":"car","synonyms":[],"supercategory":"vehicle"}]"#,
        )
        .unwrap()
    }

    #[test]
    fn para_rnd_prompt() {
        let c = native("1", "A man says \"hi\" to a dog.");
        let p = build_para_rnd_prompt(&c).unwrap();
        assert!(p.system.starts_with("I'm a researcher using LLMs for NLP tasks."));
        assert!(p.user.contains("Rewrite captions in a structurally different manner"));
        assert!(p.user.ends_with(&c.text));
        assert_eq!(p.template_id, TemplateId::ParaRnd);
        assert!(p.ref_caption_ids.is_empty());
    }

    #[test]
    fn para_tgt_prompt() {
        let c = native("1", "A dog runs.");
        let refs = vec![("r1".to_string(), "A puppy plays.".to_string()), ("r2".to_string(), "Dogs.".to_string())];
        let p = build_para_tgt_prompt(&c, &refs).unwrap();
        assert!(p.user.contains("\"A dog runs.\""));
        assert!(p.user.contains("[\"A puppy plays.\", \"Dogs.\"]"));
        assert!(p.user.contains("<final></final>"));
        assert!(p.user.contains("Enclose the final output caption in <final></final> tags"));
        assert_eq!(p.ref_caption_ids, vec!["r1", "r2"]);
        assert!(build_para_tgt_prompt(&c, &[]).is_err());

        let many: Vec<(String, String)> = (0..100).map(|i| (format!("r{i}"), format!("ref caption {i}"))).collect();
        let p = build_para_tgt_prompt(&c, &many).unwrap();
        assert!(many.iter().all(|(_, t)| p.user.contains(t.as_str())));
    }

    #[test]
    fn non_english_input_rejected() {
        let c = CaptionRecord::new("1", "de", "Ein Hund.", CaptionSource::Native, Some(0), None).unwrap();
        assert!(build_para_rnd_prompt(&c).is_err());
    }

    #[test]
    fn reference_fill_rule() {
        let v = vocab();
        let mut pool: Vec<CaptionRecord> = (0..3).map(|i| en(&format!("d{i}"), "A dog sits.")).collect();
        pool.extend((0..10).map(|i| en(&format!("o{i}"), "A man drives a car.")));
        let c = native("x", "A man walks a dog.");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let refs = sample_references(&c, &pool, &v, 100, &mut rng).unwrap();
        assert_eq!(refs.len(), 13);
        assert!(refs[..3].iter().all(|r| r.text.contains("dog")));

        let refs = sample_references(&c, &pool, &v, 5, &mut rng).unwrap();
        assert_eq!(refs.len(), 5);
        assert_eq!(refs.iter().filter(|r| r.text.contains("dog")).count(), 3);
    }

    #[test]
    fn person_mentions_do_not_count_as_shared() {
        let v = vocab();
        let pool = vec![en("a", "A man stands."), en("b", "A car parks.")];
        let c = native("x", "A woman smiles.");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_references(&c, &pool, &v, 2, &mut rng).unwrap().len(), 2);
        let single = vec![en("a", "A man stands.")];
        let refs = sample_references(&c, &single, &v, 1, &mut rng).unwrap();
        assert_eq!(refs[0].image_id, "a");
        assert!(sample_references(&c, &[], &v, 1, &mut rng).is_err());
    }

    #[test]
    fn final_tag_parsing() {
        assert_eq!(parse_final("steps...<final>A bicyclist is riding.</final>").unwrap(), "A bicyclist is riding.");
        assert!(parse_final("no tags here").is_err());
        assert!(parse_final("<final>open").is_err());
        assert_eq!(parse_final("<final> one </final> <final>two</final>").unwrap(), "one");
    }

    #[test]
    fn plain_parsing() {
        assert_eq!(parse_plain("\"A man sits.\"").unwrap(), "A man sits.");
        assert_eq!(parse_plain("```python\n\"A man sits.\"\n```").unwrap(), "A man sits.");
        assert!(parse_plain("").is_err());
        assert!(parse_plain("\"\"").is_err());
        assert!(parse_plain("one\ntwo").is_err());
    }
}
