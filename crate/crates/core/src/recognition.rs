//! Object recognition from image–label scores: thresholded prediction, the
//! validation F1 sweep, and per-supercategory precision and recall.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaptionFilter, Corpus};
use crate::error::{read_to_string, Error, Result};
use crate::retrieval::{similarity_matrix, EmbeddingTable};
use crate::vocab::ObjectVocabulary;

/// Thresholds 10, 15, ..., 50.
pub const THRESHOLD_GRID: [f64; 9] = [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0];

/// Supercategories listed first in rendered tables, in this order.
pub const LEADING_SUPERCATEGORIES: [&str; 5] = ["vehicle", "animal", "sports", "furniture", "electronic"];

pub type Labels = BTreeMap<String, BTreeSet<String>>;

/// Image × class scores on the cosine × 100 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelScoreTable {
    image_ids: Vec<String>,
    class_names: Vec<String>,
    scores: Vec<f64>,
}

impl LabelScoreTable {
    pub fn new(image_ids: Vec<String>, class_names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != image_ids.len() {
            return Err(Error::Validation(format!("{} images but {} score rows", image_ids.len(), rows.len())));
        }
        let mut scores = Vec::with_capacity(rows.len() * class_names.len());
        for (id, row) in image_ids.iter().zip(rows) {
            if row.len() != class_names.len() {
                return Err(Error::Validation(format!(
                    "image {id} has {} scores for {} classes",
                    row.len(),
                    class_names.len()
                )));
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::Validation(format!("image {id} has a non-finite score")));
            }
            scores.extend(row);
        }
        Ok(Self {
            image_ids,
            class_names,
            scores,
        })
    }

    /// Cosine similarity × 100 between image vectors and label-text vectors.
    /// Label ids become the class names.
    pub fn from_embeddings(images: &EmbeddingTable, labels: &EmbeddingTable) -> Result<Self> {
        let sim = similarity_matrix(images, labels)?;
        let rows = (0..sim.rows())
            .map(|i| (0..sim.cols()).map(|j| 100.0 * sim.get(i, j)).collect())
            .collect();
        Self::new(images.ids().to_vec(), labels.ids().to_vec(), rows)
    }

    /// CSV with header `image_id,<class>,<class>,...` and one row per image.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty score file"))?;
        let class_names: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let mut image_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let mut cells = line.split(',');
            let id = cells.next().unwrap_or_default().trim().to_string();
            let row = cells
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if row.len() != class_names.len() {
                return Err(Error::parse(path, i + 1, format!("expected {} scores, got {}", class_names.len(), row.len())));
            }
            image_ids.push(id);
            rows.push(row);
        }
        Self::new(image_ids, class_names, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("image_id,{}\n", self.class_names.join(","));
        for (i, id) in self.image_ids.iter().enumerate() {
            let row: Vec<String> = self.row(i).iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{id},{}", row.join(","));
        }
        out
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.class_names.len();
        &self.scores[i * c..(i + 1) * c]
    }
}

/// Classes scoring strictly above `threshold`, per image.
pub fn predict_objects(scores: &LabelScoreTable, threshold: f64) -> Labels {
    scores
        .image_ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let predicted = scores
                .row(i)
                .iter()
                .zip(&scores.class_names)
                .filter(|(s, _)| **s > threshold)
                .map(|(_, c)| c.clone())
                .collect();
            (id.clone(), predicted)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Precision, or `None` when nothing was predicted.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Recall, or `None` when nothing was relevant.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_coverage(scores: &LabelScoreTable, truth: &Labels) -> Result<()> {
    match scores.image_ids.iter().find(|id| !truth.contains_key(*id)) {
        Some(id) => Err(Error::Precondition(format!("no ground truth for image {id}"))),
        None => Ok(()),
    }
}

/// Per-class counts over all (image, class) decisions. Truth labels outside
/// the table's classes are ignored.
fn class_counts(scores: &LabelScoreTable, truth: &Labels, threshold: f64) -> BTreeMap<String, Counts> {
    let predictions = predict_objects(scores, threshold);
    let mut counts: BTreeMap<String, Counts> = scores.class_names.iter().map(|c| (c.clone(), Counts::default())).collect();
    for id in &scores.image_ids {
        let predicted = &predictions[id];
        let relevant = &truth[id];
        for (class, c) in counts.iter_mut() {
            match (predicted.contains(class), relevant.contains(class)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

fn micro(counts: &BTreeMap<String, Counts>) -> Counts {
    let mut total = Counts::default();
    for c in counts.values() {
        total.add(*c);
    }
    total
}

/// Micro-averaged counts at one threshold.
pub fn micro_counts(scores: &LabelScoreTable, truth: &Labels, threshold: f64) -> Result<Counts> {
    check_coverage(scores, truth)?;
    Ok(micro(&class_counts(scores, truth, threshold)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub threshold: f64,
    pub f1: f64,
    /// `(threshold, micro-F1)` for every grid point.
    pub curve: Vec<(f64, f64)>,
    /// Set when no threshold produced a true positive.
    pub no_true_positives: bool,
}

/// Grid search for the micro-F1 maximizer; ties go to the smaller threshold.
pub fn sweep_threshold(scores: &LabelScoreTable, truth: &Labels) -> Result<SweepResult> {
    sweep_threshold_over(scores, truth, &THRESHOLD_GRID)
}

pub fn sweep_threshold_over(scores: &LabelScoreTable, truth: &Labels, grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty threshold grid".into()));
    }
    check_coverage(scores, truth)?;
    let mut curve = Vec::with_capacity(grid.len());
    let mut any_tp = false;
    for &t in grid {
        let c = micro(&class_counts(scores, truth, t));
        any_tp |= c.tp > 0;
        curve.push((t, c.f1()));
    }
    if !any_tp {
        log::warn!("no true positives at any threshold; falling back to {}", grid[0]);
        return Ok(SweepResult {
            threshold: grid[0],
            f1: 0.0,
            curve,
            no_true_positives: true,
        });
    }
    let (threshold, f1) = curve
        .iter()
        .copied()
        .reduce(|best, cur| if cur.1 > best.1 { cur } else { best })
        .expect("grid is non-empty");
    Ok(SweepResult {
        threshold,
        f1,
        curve,
        no_true_positives: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupercategoryStats {
    pub mentions: usize,
    pub precision: f64,
    pub recall: f64,
    /// Nothing in this supercategory was predicted; precision is reported as 0.
    pub precision_undefined: bool,
    /// Nothing in this supercategory was relevant; recall is reported as 0.
    pub recall_undefined: bool,
    pub top5_by_recall: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub threshold: f64,
    pub per_supercategory: BTreeMap<String, SupercategoryStats>,
    pub micro: MicroScores,
}

impl RecognitionReport {
    /// Supercategory names in display order.
    pub fn row_order(&self) -> Vec<&str> {
        let mut order: Vec<&str> = LEADING_SUPERCATEGORIES
            .iter()
            .copied()
            .filter(|s| self.per_supercategory.contains_key(*s))
            .collect();
        order.extend(
            self.per_supercategory
                .keys()
                .map(String::as_str)
                .filter(|s| !LEADING_SUPERCATEGORIES.contains(s)),
        );
        order
    }

    /// Mentions, precision and recall rows with one column per supercategory.
    pub fn render_table(&self) -> String {
        let order = self.row_order();
        let width = order.iter().map(|s| s.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<10}", "");
        for s in &order {
            let _ = write!(out, " {:>width$}", capitalize(s));
        }
        out.push('\n');
        let mut row = |label: &str, cell: &dyn Fn(&SupercategoryStats) -> String| {
            let _ = write!(out, "{label:<10}");
            for s in &order {
                let _ = write!(out, " {:>width$}", cell(&self.per_supercategory[*s]));
            }
            out.push('\n');
        };
        row("Mentions", &|s| s.mentions.to_string());
        row("Precision", &|s| format!("{:.2}", s.precision));
        row("Recall", &|s| format!("{:.2}", s.recall));
        let _ = writeln!(
            out,
            "threshold {}  micro P {:.3} R {:.3} F1 {:.3}",
            self.threshold, self.micro.precision, self.micro.recall, self.micro.f1
        );
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Precision and recall per supercategory at a fixed threshold.
///
/// `train_mentions` feeds the mentions row; classes it omits count as zero.
pub fn evaluate_recognition(
    scores: &LabelScoreTable,
    truth: &Labels,
    threshold: f64,
    vocab: &ObjectVocabulary,
    train_mentions: &BTreeMap<String, usize>,
) -> Result<RecognitionReport> {
    check_coverage(scores, truth)?;
    if let Some(c) = scores.class_names.iter().find(|c| vocab.class(c).is_none()) {
        return Err(Error::Validation(format!("score column {c} is not a vocabulary class")));
    }
    let counts = class_counts(scores, truth, threshold);
    let mut per_super: BTreeMap<String, (usize, Counts)> = vocab
        .supercategories()
        .into_iter()
        .map(|s| (s.to_string(), (0, Counts::default())))
        .collect();
    for class in vocab.classes() {
        let entry = per_super.get_mut(&class.supercategory).expect("supercategory listed by vocabulary");
        entry.0 += train_mentions.get(&class.name).copied().unwrap_or(0);
        if let Some(c) = counts.get(&class.name) {
            entry.1.add(*c);
        }
    }
    let mut stats: BTreeMap<String, SupercategoryStats> = per_super
        .into_iter()
        .map(|(name, (mentions, c))| {
            (
                name,
                SupercategoryStats {
                    mentions,
                    precision: c.precision().unwrap_or(0.0),
                    recall: c.recall().unwrap_or(0.0),
                    precision_undefined: c.precision().is_none(),
                    recall_undefined: c.recall().is_none(),
                    top5_by_recall: false,
                },
            )
        })
        .collect();
    let mut by_recall: Vec<(&String, f64)> = stats.iter().map(|(n, s)| (n, s.recall)).collect();
    by_recall.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let top: Vec<String> = by_recall.iter().take(5).map(|(n, _)| (*n).clone()).collect();
    for name in top {
        stats.get_mut(&name).expect("known supercategory").top5_by_recall = true;
    }
    let total = micro(&counts);
    Ok(RecognitionReport {
        threshold,
        per_supercategory: stats,
        micro: MicroScores {
            precision: total.precision().unwrap_or(0.0),
            recall: total.recall().unwrap_or(0.0),
            f1: total.f1(),
        },
    })
}

/// Classes mentioned in any caption matching `filter`, for every image in
/// `images`. Images without a matching caption map to the empty set.
pub fn truth_from_captions(
    corpus: &Corpus,
    vocab: &ObjectVocabulary,
    filter: &CaptionFilter,
    images: &BTreeSet<String>,
) -> Labels {
    let mut truth: Labels = images.iter().map(|id| (id.clone(), BTreeSet::new())).collect();
    for caption in corpus.captions_where(filter) {
        if let Some(set) = truth.get_mut(&caption.image_id) {
            set.extend(vocab.detect_mentions(&caption.text).into_iter().map(|m| m.class_name));
        }
    }
    truth
}
