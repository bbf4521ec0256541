//! Caption corpora: ingestion, provenance, and deterministic splits.
//!
//! A [`Corpus`] holds images and every caption written or derived for them,
//! each tagged with its language and provenance ([`CaptionSource`]). Native
//! captions carry the index of the independently written set they come from
//! (0..=4); translated sets carry none.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_to_string, Error, Result};
use crate::text::nfc;

/// Number of independently written caption sets per language.
pub const NATIVE_SETS: u8 = 5;

/// Split sizes for the full 31,014-image corpus: reference, train, val, test.
pub const FULL_SPLIT_SIZES: [usize; 4] = [9_666, 9_666, 1_014, 10_668];
pub const FULL_CORPUS_SIZE: usize = 31_014;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Native,
    HumanTranslated,
    MachineTranslated,
    Augmented,
}

impl CaptionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptionSource::Native => "native",
            CaptionSource::HumanTranslated => "human_translated",
            CaptionSource::MachineTranslated => "machine_translated",
            CaptionSource::Augmented => "augmented",
        }
    }
}

impl fmt::Display for CaptionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CaptionSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "native" => Ok(CaptionSource::Native),
            "human_translated" | "ht" => Ok(CaptionSource::HumanTranslated),
            "machine_translated" | "mt" => Ok(CaptionSource::MachineTranslated),
            "augmented" => Ok(CaptionSource::Augmented),
            other => Err(Error::Validation(format!("unknown caption source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

impl ImageRef {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            uri: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub image_id: String,
    pub language: String,
    pub text: String,
    pub source: CaptionSource,
    #[serde(default)]
    pub set_index: Option<u8>,
    #[serde(default)]
    pub derivation: Option<String>,
}

impl CaptionRecord {
    /// Builds a validated record with an NFC-normalized text and a derived `caption_id`.
    pub fn new(
        image_id: impl Into<String>,
        language: impl Into<String>,
        text: &str,
        source: CaptionSource,
        set_index: Option<u8>,
        derivation: Option<String>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        let language = language.into();
        let caption_id = caption_id(&image_id, &language, source, set_index, derivation.as_deref());
        let record = Self {
            caption_id,
            image_id,
            language,
            text: nfc(text.trim()),
            source,
            set_index,
            derivation,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!("caption {} has empty text", self.caption_id)));
        }
        match (self.source, self.set_index) {
            (CaptionSource::Native, None) => {
                return Err(Error::Validation(format!(
                    "native caption {} requires a set_index",
                    self.caption_id
                )))
            }
            (CaptionSource::Native, Some(n)) if n >= NATIVE_SETS => {
                return Err(Error::Validation(format!(
                    "caption {} has set_index {n} outside 0..{NATIVE_SETS}",
                    self.caption_id
                )))
            }
            (CaptionSource::Native, Some(_)) => {}
            (other, Some(_)) => {
                return Err(Error::Validation(format!(
                    "set_index is only valid for native captions, got source {other} for {}",
                    self.caption_id
                )))
            }
            (_, None) => {}
        }
        match (self.source, &self.derivation) {
            (CaptionSource::Augmented, None) => Err(Error::Validation(format!(
                "augmented caption {} requires a derivation",
                self.caption_id
            ))),
            (CaptionSource::Augmented, Some(_)) => Ok(()),
            (other, Some(_)) => Err(Error::Validation(format!(
                "derivation is only valid for augmented captions, got source {other} for {}",
                self.caption_id
            ))),
            (_, None) => Ok(()),
        }
    }
}

/// `{image_id}:{language}:{source}:{set_index|derivation-hash|-}`
pub fn caption_id(
    image_id: &str,
    language: &str,
    source: CaptionSource,
    set_index: Option<u8>,
    derivation: Option<&str>,
) -> String {
    let tail = match (set_index, derivation) {
        (Some(n), _) => n.to_string(),
        (None, Some(d)) => short_hash(d),
        (None, None) => "-".to_string(),
    };
    format!("{image_id}:{language}:{source}:{tail}")
}

fn short_hash(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    hex::encode(&digest[..6])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Corpus {
    pub name: String,
    pub images: Vec<ImageRef>,
    pub captions: Vec<CaptionRecord>,
}

#[derive(Deserialize)]
struct RawCorpus {
    name: String,
    images: Vec<ImageRef>,
    captions: Vec<CaptionRecord>,
}

impl<'de> Deserialize<'de> for Corpus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawCorpus::deserialize(d)?;
        Corpus::new(raw.name, raw.images, raw.captions).map_err(serde::de::Error::custom)
    }
}

impl Corpus {
    pub fn new(name: impl Into<String>, images: Vec<ImageRef>, captions: Vec<CaptionRecord>) -> Result<Self> {
        let corpus = Self {
            name: name.into(),
            images,
            captions,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            images: Vec::new(),
            captions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for img in &self.images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate image_id {}", img.image_id)));
            }
        }
        let mut caption_ids = HashSet::new();
        let mut slots = HashSet::new();
        for cap in &self.captions {
            cap.validate()?;
            if !ids.contains(cap.image_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "caption {} references unknown image {}",
                    cap.caption_id, cap.image_id
                )));
            }
            if !caption_ids.insert(cap.caption_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate caption_id {}", cap.caption_id)));
            }
            if let Some(n) = cap.set_index {
                if !slots.insert((cap.image_id.as_str(), cap.language.as_str(), n)) {
                    return Err(Error::Integrity(format!(
                        "image {} has two {} captions in set {n}",
                        cap.image_id, cap.language
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len_images(&self) -> usize {
        self.images.len()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|i| i.image_id.as_str())
    }

    pub fn caption(&self, caption_id: &str) -> Option<&CaptionRecord> {
        self.captions.iter().find(|c| c.caption_id == caption_id)
    }

    pub fn captions_where<'a>(&'a self, filter: &'a CaptionFilter) -> impl Iterator<Item = &'a CaptionRecord> + 'a {
        self.captions.iter().filter(move |c| filter.matches(c))
    }

    /// caption_id → image_id for every caption.
    pub fn pairing(&self) -> HashMap<String, String> {
        self.captions
            .iter()
            .map(|c| (c.caption_id.clone(), c.image_id.clone()))
            .collect()
    }

    /// Adds one caption per image from `file`.
    ///
    /// Every image in the corpus must receive exactly one caption and every
    /// id in the file must already exist.
    pub fn attach_caption_set(
        mut self,
        file: &CaptionSetFile,
        language: &str,
        source: CaptionSource,
        set_index: Option<u8>,
    ) -> Result<Self> {
        match (source, set_index) {
            (CaptionSource::Native, None) => {
                return Err(Error::Validation("native caption sets require a set_index".into()))
            }
            (CaptionSource::Native, Some(_)) => {}
            (CaptionSource::Augmented, _) => {
                return Err(Error::Validation(
                    "augmented captions are produced by the augment pipeline, not attached".into(),
                ))
            }
            (other, Some(_)) => {
                return Err(Error::Validation(format!(
                    "set_index is only valid for native captions, got source {other}"
                )))
            }
            (_, None) => {}
        }

        let pairs = file.read()?;
        let known: HashSet<&str> = self.image_ids().collect();
        let mut seen = HashSet::new();
        let mut unknown = Vec::new();
        for (id, _) in &pairs {
            if !known.contains(id.as_str()) {
                unknown.push(id.clone());
            } else if !seen.insert(id.clone()) {
                return Err(Error::Integrity(format!("image {id} appears twice in {}", file.display())));
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Integrity(format!("unknown image ids: {}", unknown.join(", "))));
        }
        let missing: Vec<&str> = self.image_ids().filter(|id| !seen.contains(*id)).collect();
        if !missing.is_empty() {
            return Err(Error::Integrity(format!("images missing a caption: {}", missing.join(", "))));
        }

        for (image_id, text) in pairs {
            let record = CaptionRecord::new(image_id, language, &text, source, set_index, None)?;
            self.captions.push(record);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reads a Flickr30K-style tokens file: `imageid#n<TAB>caption` with `n` in 0..=4.
pub fn load_flickr_tokens(path: impl AsRef<Path>, language: &str) -> Result<Corpus> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_flickr_tokens(&text, path, &name, language)
}

pub(crate) fn parse_flickr_tokens(text: &str, path: &Path, name: &str, language: &str) -> Result<Corpus> {
    let mut images = Vec::new();
    let mut image_set = HashSet::new();
    let mut slots = HashSet::new();
    let mut captions = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (key, caption) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "missing tab separator"))?;
        let (image_id, n) = key
            .rsplit_once('#')
            .ok_or_else(|| Error::parse(path, lineno, format!("expected imageid#n, got {key:?}")))?;
        let n: u8 = n
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("caption index {n:?} is not an integer")))?;
        if n >= NATIVE_SETS {
            return Err(Error::parse(path, lineno, format!("caption index {n} exceeds 4")));
        }
        if image_id.is_empty() {
            return Err(Error::parse(path, lineno, "empty image id"));
        }
        if caption.trim().is_empty() {
            return Err(Error::parse(path, lineno, "empty caption text"));
        }
        if !slots.insert((image_id.to_string(), n)) {
            return Err(Error::Integrity(format!(
                "{}:{lineno}: duplicate caption {image_id}#{n}",
                path.display()
            )));
        }
        if image_set.insert(image_id.to_string()) {
            images.push(ImageRef::new(image_id));
        }
        captions.push(CaptionRecord::new(
            image_id,
            language,
            caption,
            CaptionSource::Native,
            Some(n),
            None,
        )?);
    }
    Corpus::new(name, images, captions)
}

/// A one-caption-per-image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaptionSetFile {
    /// `imageid<TAB>caption` lines.
    Tabbed(PathBuf),
    /// Multi30K style: one caption per line, aligned with an image-id list.
    Aligned { captions: PathBuf, ids: PathBuf },
}

impl CaptionSetFile {
    fn display(&self) -> String {
        match self {
            CaptionSetFile::Tabbed(p) => p.display().to_string(),
            CaptionSetFile::Aligned { captions, .. } => captions.display().to_string(),
        }
    }

    fn read(&self) -> Result<Vec<(String, String)>> {
        match self {
            CaptionSetFile::Tabbed(path) => {
                let text = read_to_string(path)?;
                let mut out = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let (id, caption) = line
                        .split_once('\t')
                        .ok_or_else(|| Error::parse(path, i + 1, "missing tab separator"))?;
                    out.push((id.trim().to_string(), caption.to_string()));
                }
                Ok(out)
            }
            CaptionSetFile::Aligned { captions, ids } => {
                let caps = read_to_string(captions)?;
                let ids_text = read_to_string(ids)?;
                let caps: Vec<&str> = caps.lines().collect();
                let ids: Vec<&str> = ids_text.lines().filter(|l| !l.trim().is_empty()).collect();
                let caps = trim_trailing_blank(caps);
                if caps.len() != ids.len() {
                    return Err(Error::Integrity(format!(
                        "{} has {} lines but id list {} has {}",
                        captions.display(),
                        caps.len(),
                        self.id_path().display(),
                        ids.len()
                    )));
                }
                Ok(ids
                    .into_iter()
                    .zip(caps)
                    .map(|(id, c)| (id.trim().to_string(), c.to_string()))
                    .collect())
            }
        }
    }

    fn id_path(&self) -> &Path {
        match self {
            CaptionSetFile::Tabbed(p) => p,
            CaptionSetFile::Aligned { ids, .. } => ids,
        }
    }
}

fn trim_trailing_blank(mut lines: Vec<&str>) -> Vec<&str> {
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    lines
}

/// Selects captions by language, provenance, set index and image subset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptionFilter {
    pub language: Option<String>,
    pub source: Option<CaptionSource>,
    pub set_index: Option<u8>,
    pub images: Option<BTreeSet<String>>,
}

impl CaptionFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }

    pub fn source(mut self, source: CaptionSource) -> Self {
        self.source = Some(source);
        self
    }

    pub fn set_index(mut self, set_index: u8) -> Self {
        self.set_index = Some(set_index);
        self
    }

    pub fn images(mut self, images: BTreeSet<String>) -> Self {
        self.images = Some(images);
        self
    }

    pub fn matches(&self, c: &CaptionRecord) -> bool {
        self.language.as_deref().is_none_or(|l| l == c.language)
            && self.source.is_none_or(|s| s == c.source)
            && self.set_index.is_none_or(|n| Some(n) == c.set_index)
            && self.images.as_ref().is_none_or(|ids| ids.contains(&c.image_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Reference,
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Split::Reference),
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub reference: BTreeSet<String>,
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitAssignment {
    pub fn ids(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Reference => &self.reference,
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> [usize; 4] {
        [self.reference.len(), self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        [Split::Reference, Split::Train, Split::Val, Split::Test]
            .into_iter()
            .find(|s| self.ids(*s).contains(image_id))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&read_to_string(path.as_ref())?)?)
    }
}

/// Split sizes (reference, train, val, test) for a corpus of `n` images.
///
/// Exact for the full corpus; otherwise floor-proportional with the remainder
/// going to test. Reference, train and val get at least one image each.
pub fn split_sizes(n: usize) -> [usize; 4] {
    if n == FULL_CORPUS_SIZE {
        return FULL_SPLIT_SIZES;
    }
    let prop = |w: usize| ((n * w) / FULL_CORPUS_SIZE).max(1);
    let reference = prop(FULL_SPLIT_SIZES[0]);
    let train = prop(FULL_SPLIT_SIZES[1]);
    let val = prop(FULL_SPLIT_SIZES[2]);
    [reference, train, val, n - reference - train - val]
}

/// Seeded shuffle of the sorted image ids, then contiguous cuts.
pub fn make_splits(corpus: &Corpus, seed: u64) -> Result<SplitAssignment> {
    let n = corpus.len_images();
    if n < 4 {
        return Err(Error::Precondition(format!(
            "need at least 4 images to populate every split, corpus has {n}"
        )));
    }
    let mut ids: Vec<&str> = corpus.image_ids().collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let [r, t, v, _] = split_sizes(n);
    let take = |range: std::ops::Range<usize>| ids[range].iter().map(|s| s.to_string()).collect();
    Ok(SplitAssignment {
        seed,
        reference: take(0..r),
        train: take(r..r + t),
        val: take(r + t..r + t + v),
        test: take(r + t + v..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_captions_for_one_image() {
        let f = tmp_file("1000.jpg#0\tTwo dogs run.\n1000.jpg#1\tDogs racing.\n");
        let corpus = load_flickr_tokens(f.path(), "en").unwrap();
        assert_eq!(corpus.images.len(), 1);
        assert_eq!(corpus.captions.len(), 2);
        assert_eq!(corpus.captions[0].set_index, Some(0));
        assert_eq!(corpus.captions[1].set_index, Some(1));
        assert_eq!(corpus.captions[0].caption_id, "1000.jpg:en:native:0");
        assert_eq!(corpus.captions[0].source, CaptionSource::Native);
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let f = tmp_file("");
        let corpus = load_flickr_tokens(f.path(), "en").unwrap();
        assert!(corpus.images.is_empty() && corpus.captions.is_empty());
    }

    #[test]
    fn index_above_four_is_a_parse_error_on_line_one() {
        let f = tmp_file("1000.jpg#7\tx\n");
        match load_flickr_tokens(f.path(), "en") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_their_line_number() {
        for (body, line) in [
            ("1.jpg#0\tok\nno tab here\n", 2),
            ("1.jpg#0\tok\n1.jpg#x\tbad\n", 2),
            ("1.jpg\tmissing index\n", 1),
        ] {
            let f = tmp_file(body);
            match load_flickr_tokens(f.path(), "en") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{body:?}"),
                other => panic!("expected parse error for {body:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_image_and_index_is_integrity_error() {
        let f = tmp_file("1.jpg#0\ta\n1.jpg#0\tb\n");
        assert!(matches!(load_flickr_tokens(f.path(), "en"), Err(Error::Integrity(_))));
    }

    #[test]
    fn captions_are_nfc_normalized() {
        let f = tmp_file("1.jpg#0\tEin Mann u\u{0308}ber der Stra\u{00df}e\n");
        let corpus = load_flickr_tokens(f.path(), "de").unwrap();
        assert_eq!(corpus.captions[0].text, "Ein Mann über der Straße");
    }

    fn three_image_corpus() -> Corpus {
        let f = tmp_file("a#0\tA dog.\nb#0\tA cat.\nc#0\tA car.\n");
        load_flickr_tokens(f.path(), "en").unwrap()
    }

    #[test]
    fn attach_human_translated_set() {
        let corpus = three_image_corpus();
        let f = tmp_file("a\tEin Hund.\nb\tEine Katze.\nc\tEin Auto.\n");
        let before = corpus.captions.len();
        let corpus = corpus
            .attach_caption_set(
                &CaptionSetFile::Tabbed(f.path().into()),
                "de",
                CaptionSource::HumanTranslated,
                None,
            )
            .unwrap();
        assert_eq!(corpus.captions.len(), before + 3);
        assert_eq!(corpus.captions.last().unwrap().caption_id, "c:de:human_translated:-");
    }

    #[test]
    fn attach_aligned_set_with_sidecar_ids() {
        let corpus = three_image_corpus();
        let caps = tmp_file("Ein Auto.\nEin Hund.\nEine Katze.\n");
        let ids = tmp_file("c\na\nb\n");
        let corpus = corpus
            .attach_caption_set(
                &CaptionSetFile::Aligned {
                    captions: caps.path().into(),
                    ids: ids.path().into(),
                },
                "de",
                CaptionSource::Native,
                Some(0),
            )
            .unwrap();
        let c = corpus.caption("a:de:native:0").unwrap();
        assert_eq!(c.text, "Ein Hund.");
    }

    #[test]
    fn attach_rejects_unknown_and_missing_ids() {
        let f = tmp_file("a\tx\nb\ty\nzzz\tz\n");
        let err = three_image_corpus()
            .attach_caption_set(&CaptionSetFile::Tabbed(f.path().into()), "de", CaptionSource::HumanTranslated, None)
            .unwrap_err();
        assert!(matches!(&err, Error::Integrity(m) if m.contains("zzz")), "{err}");

        let f = tmp_file("a\tx\n");
        let err = three_image_corpus()
            .attach_caption_set(&CaptionSetFile::Tabbed(f.path().into()), "de", CaptionSource::HumanTranslated, None)
            .unwrap_err();
        assert!(matches!(&err, Error::Integrity(m) if m.contains('b') && m.contains('c')), "{err}");
    }

    #[test]
    fn attach_machine_translated_with_set_index_is_rejected() {
        let f = tmp_file("a\tx\nb\ty\nc\tz\n");
        let err = three_image_corpus()
            .attach_caption_set(
                &CaptionSetFile::Tabbed(f.path().into()),
                "de",
                CaptionSource::MachineTranslated,
                Some(1),
            )
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn record_invariants() {
        assert!(CaptionRecord::new("a", "en", "   ", CaptionSource::Native, Some(0), None).is_err());
        assert!(CaptionRecord::new("a", "en", "x", CaptionSource::Native, None, None).is_err());
        assert!(CaptionRecord::new("a", "en", "x", CaptionSource::Augmented, None, None).is_err());
        assert!(CaptionRecord::new("a", "en", "x", CaptionSource::HumanTranslated, None, Some("d".into())).is_err());
        let aug = CaptionRecord::new("a", "de", "x", CaptionSource::Augmented, None, Some("hyper:a:en:native:0".into()))
            .unwrap();
        assert!(aug.caption_id.starts_with("a:de:augmented:"));
        assert_eq!(aug.caption_id.rsplit(':').next().unwrap().len(), 12);
    }

    fn synthetic(n: usize) -> Corpus {
        let images = (0..n).map(|i| ImageRef::new(format!("{i:06}.jpg"))).collect();
        Corpus::new("synthetic", images, Vec::new()).unwrap()
    }

    #[test]
    fn hundred_images_split_proportionally() {
        let s = make_splits(&synthetic(100), 3).unwrap();
        assert_eq!(s.sizes(), [31, 31, 3, 35]);
    }

    #[test]
    fn full_size_split_is_exact() {
        let s = make_splits(&synthetic(FULL_CORPUS_SIZE), 17).unwrap();
        assert_eq!(s.sizes(), [9666, 9666, 1014, 10668]);
    }

    #[test]
    fn splits_are_deterministic() {
        let c = synthetic(57);
        let a = serde_json::to_string(&make_splits(&c, 9).unwrap()).unwrap();
        let b = serde_json::to_string(&make_splits(&c, 9).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = serde_json::to_string(&make_splits(&c, 10).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn splits_ignore_image_order() {
        let mut c = synthetic(40);
        let a = make_splits(&c, 1).unwrap();
        c.images.reverse();
        assert_eq!(a, make_splits(&c, 1).unwrap());
    }

    #[test]
    fn tiny_corpus_is_rejected() {
        assert!(matches!(make_splits(&synthetic(3), 0), Err(Error::Precondition(_))));
        assert_eq!(make_splits(&synthetic(4), 0).unwrap().sizes(), [1, 1, 1, 1]);
    }

    #[test]
    fn split_json_shape() {
        let s = make_splits(&synthetic(4), 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        for key in ["seed", "reference", "train", "val", "test"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
