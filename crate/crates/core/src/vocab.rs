//! Object vocabulary and mention detection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CaptionFilter, CaptionRecord, Corpus};
use crate::error::{read_to_string, Error, Result};
use crate::text::{nfc, tokenize, Token};

/// Tokens on either side of a match that are checked against the class blocklist.
pub const SENSE_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectClass {
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    /// Irregular plurals; regular ones are generated at load.
    #[serde(default)]
    pub plurals: Vec<String>,
    #[serde(default)]
    pub synset_id: Option<String>,
    #[serde(default)]
    pub supercategory: String,
    #[serde(default)]
    pub is_person: bool,
    #[serde(default)]
    pub sense_blocklist: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FormEntry {
    class: usize,
    plural: bool,
}

#[derive(Debug, Clone)]
pub struct ObjectVocabulary {
    classes: Vec<ObjectClass>,
    index: HashMap<Vec<String>, FormEntry>,
    longest_form: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    pub caption_id: String,
    pub class_name: String,
    pub token_start: usize,
    pub token_end: usize,
    pub surface: String,
    /// Matched through a plural form.
    #[serde(default)]
    pub plural: bool,
    /// Byte range in the source text covering the matched tokens.
    #[serde(default)]
    pub byte_start: usize,
    #[serde(default)]
    pub byte_end: usize,
}

/// Regular English plural of a (possibly multi-word) term; only the last word changes.
pub fn pluralize(term: &str) -> String {
    let (head, last) = match term.rsplit_once(' ') {
        Some((h, l)) => (Some(h), l),
        None => (None, term),
    };
    let plural = pluralize_word(last);
    match head {
        Some(h) => format!("{h} {plural}"),
        None => plural,
    }
}

fn pluralize_word(w: &str) -> String {
    const SIBILANT: [&str; 5] = ["s", "x", "z", "ch", "sh"];
    if SIBILANT.iter().any(|s| w.ends_with(s)) {
        return format!("{w}es");
    }
    let mut chars = w.chars().rev();
    if let (Some('y'), Some(prev)) = (chars.next(), chars.next()) {
        if !"aeiou".contains(prev) {
            return format!("{}ies", &w[..w.len() - 1]);
        }
    }
    format!("{w}s")
}

fn normalize_term(s: &str) -> String {
    nfc(s.trim()).to_lowercase()
}

fn term_tokens(term: &str) -> Vec<String> {
    tokenize(term)
        .into_iter()
        .map(|t| t.norm)
        .filter(|t| !t.is_empty())
        .collect()
}

impl ObjectVocabulary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json_str(&read_to_string(path)?)
            .map_err(|e| Error::Load(format!("{}: {e}", path.display())))
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let classes: Vec<ObjectClass> =
            serde_json::from_str(json).map_err(|e| Error::Load(format!("invalid vocabulary json: {e}")))?;
        Self::from_classes(classes)
    }

    /// Normalizes terms, generates plurals and builds the form index.
    pub fn from_classes(classes: Vec<ObjectClass>) -> Result<Self> {
        let mut normalized = Vec::with_capacity(classes.len());
        for mut c in classes {
            c.name = normalize_term(&c.name);
            if c.name.is_empty() {
                return Err(Error::Load("class with empty name".into()));
            }
            c.supercategory = normalize_term(&c.supercategory);
            if c.supercategory.is_empty() {
                return Err(Error::Load(format!("class {:?} is missing a supercategory", c.name)));
            }
            c.synonyms = c.synonyms.iter().map(|s| normalize_term(s)).collect();
            c.plurals = c.plurals.iter().map(|s| normalize_term(s)).collect();
            c.sense_blocklist = c.sense_blocklist.iter().map(|s| normalize_term(s)).collect();
            normalized.push(c);
        }

        let mut index: HashMap<Vec<String>, FormEntry> = HashMap::new();
        let mut insert = |form: &str, entry: FormEntry, classes: &[ObjectClass]| -> Result<()> {
            let key = term_tokens(form);
            if key.is_empty() {
                return Ok(());
            }
            match index.get(&key) {
                Some(existing) if existing.class != entry.class => Err(Error::Load(format!(
                    "term {form:?} maps to both {:?} and {:?}",
                    classes[existing.class].name, classes[entry.class].name
                ))),
                Some(_) => Ok(()),
                None => {
                    index.insert(key, entry);
                    Ok(())
                }
            }
        };

        for (i, c) in normalized.iter().enumerate() {
            for s in std::iter::once(&c.name).chain(&c.synonyms) {
                insert(s, FormEntry { class: i, plural: false }, &normalized)?;
            }
        }
        for (i, c) in normalized.iter().enumerate() {
            let generated = std::iter::once(&c.name).chain(&c.synonyms).map(|s| pluralize(s));
            for p in generated.chain(c.plurals.iter().cloned()) {
                insert(&p, FormEntry { class: i, plural: true }, &normalized)?;
            }
        }

        let longest_form = index.keys().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            classes: normalized,
            index,
            longest_form,
        })
    }

    pub fn classes(&self) -> &[ObjectClass] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ObjectClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Every surface form (singular and plural) that resolves to `name`.
    pub fn forms_of(&self, name: &str) -> BTreeSet<String> {
        self.index
            .iter()
            .filter(|(_, e)| self.classes[e.class].name == name)
            .map(|(k, _)| k.join(" "))
            .collect()
    }

    pub fn supercategories(&self) -> BTreeSet<&str> {
        self.classes.iter().map(|c| c.supercategory.as_str()).collect()
    }

    pub fn is_person(&self, class_name: &str) -> bool {
        self.class(class_name).is_some_and(|c| c.is_person)
    }

    /// Longest-match, left-to-right, non-overlapping detection.
    ///
    /// A candidate match is dropped when a blocklisted word of its class occurs
    /// within [`SENSE_WINDOW`] tokens on either side; shorter candidates at the
    /// same position are then tried.
    pub fn detect_mentions(&self, text: &str) -> Vec<MentionSpan> {
        let tokens = tokenize(text);
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.match_at(&tokens, i) {
                Some((len, entry)) => {
                    let end = i + len;
                    spans.push(MentionSpan {
                        caption_id: String::new(),
                        class_name: self.classes[entry.class].name.clone(),
                        token_start: i,
                        token_end: end,
                        surface: tokens[i..end].iter().map(|t| t.norm.as_str()).collect::<Vec<_>>().join(" "),
                        plural: entry.plural,
                        byte_start: tokens[i].start,
                        byte_end: tokens[end - 1].end,
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        spans
    }

    /// [`detect_mentions`](Self::detect_mentions) with the caption id filled in.
    pub fn detect_in_caption(&self, caption: &CaptionRecord) -> Vec<MentionSpan> {
        let mut spans = self.detect_mentions(&caption.text);
        for s in &mut spans {
            s.caption_id.clone_from(&caption.caption_id);
        }
        spans
    }

    fn match_at(&self, tokens: &[Token], i: usize) -> Option<(usize, FormEntry)> {
        if tokens[i].norm.is_empty() {
            return None;
        }
        let max = self.longest_form.min(tokens.len() - i);
        let mut key: Vec<String> = tokens[i..i + max].iter().map(|t| t.norm.clone()).collect();
        for len in (1..=max).rev() {
            key.truncate(len);
            if let Some(entry) = self.index.get(&key) {
                if !self.blocked(tokens, i, i + len, &self.classes[entry.class]) {
                    return Some((len, *entry));
                }
            }
        }
        None
    }

    fn blocked(&self, tokens: &[Token], start: usize, end: usize, class: &ObjectClass) -> bool {
        if class.sense_blocklist.is_empty() {
            return false;
        }
        let before = start.saturating_sub(SENSE_WINDOW)..start;
        let after = end..(end + SENSE_WINDOW).min(tokens.len());
        before
            .chain(after)
            .any(|j| class.sense_blocklist.iter().any(|b| *b == tokens[j].norm))
    }

    /// Non-person classes mentioned in `text`.
    pub fn non_person_classes(&self, text: &str) -> BTreeSet<String> {
        self.detect_mentions(text)
            .into_iter()
            .filter(|m| !self.is_person(&m.class_name))
            .map(|m| m.class_name)
            .collect()
    }
}

/// Mention counts per class over the captions selected by `filter`.
pub fn mention_profile(corpus: &Corpus, vocab: &ObjectVocabulary, filter: &CaptionFilter) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for caption in corpus.captions_where(filter) {
        for m in vocab.detect_mentions(&caption.text) {
            *counts.entry(m.class_name).or_insert(0) += 1;
        }
    }
    counts
}
