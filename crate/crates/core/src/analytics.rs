//! Corpus comparison statistics: mention ratios, per-language-group concept
//! statistics, and human evaluation scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub count_a: usize,
    pub count_b: usize,
    /// `None` when the class never occurs in `b`.
    pub ratio: Option<f64>,
}

impl RatioEntry {
    pub fn is_infinite(&self) -> bool {
        self.ratio.is_none()
    }

    /// How many percent more often the class occurs in `a` than in `b`.
    pub fn percent_more(&self) -> Option<f64> {
        self.ratio.map(|r| (r - 1.0) * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionRatio {
    pub overall: f64,
    /// `a / b` restricted to classes that occur in `b`.
    pub overall_finite: f64,
    pub per_class: BTreeMap<String, RatioEntry>,
}

/// Ratio of mention totals of `a` to `b`, overall and per class.
pub fn mention_ratio(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> Result<MentionRatio> {
    let total_a: usize = a.values().sum();
    let total_b: usize = b.values().sum();
    if total_a == 0 || total_b == 0 {
        return Err(Error::Precondition(format!("mention totals must be positive (a = {total_a}, b = {total_b})")));
    }
    let classes: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut per_class = BTreeMap::new();
    let mut finite_a = 0;
    for class in classes {
        let count_a = a.get(class).copied().unwrap_or(0);
        let count_b = b.get(class).copied().unwrap_or(0);
        if count_a == 0 && count_b == 0 {
            continue;
        }
        let ratio = (count_b > 0).then(|| count_a as f64 / count_b as f64);
        if ratio.is_some() {
            finite_a += count_a;
        }
        per_class.insert(class.clone(), RatioEntry { count_a, count_b, ratio });
    }
    Ok(MentionRatio {
        overall: total_a as f64 / total_b as f64,
        overall_finite: finite_a as f64 / total_b as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptCountRow {
    pub concept: String,
    pub per_language: BTreeMap<String, f64>,
}

/// CSV with header `concept,<lang>,<lang>,...`. Counts may be fractional.
pub fn load_concept_counts(path: impl AsRef<Path>) -> Result<Vec<ConceptCountRow>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty count file"))?;
    let languages: Vec<&str> = header.split(',').skip(1).map(str::trim).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let mut cells = line.split(',').map(str::trim);
        let concept = cells.next().unwrap_or_default().to_string();
        let values: Vec<&str> = cells.collect();
        if values.len() != languages.len() {
            return Err(Error::parse(path, i + 1, format!("expected {} counts, got {}", languages.len(), values.len())));
        }
        let mut per_language = BTreeMap::new();
        for (lang, v) in languages.iter().zip(values) {
            let count: f64 = v.parse().map_err(|_| Error::parse(path, i + 1, format!("bad count {v:?} for {lang}")))?;
            if !(count >= 0.0 && count.is_finite()) {
                return Err(Error::parse(path, i + 1, format!("count for {lang} must be non-negative")));
            }
            per_language.insert(lang.to_string(), count);
        }
        rows.push(ConceptCountRow { concept, per_language });
    }
    Ok(rows)
}

/// JSON object mapping group names to language codes.
pub fn load_groups(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single language.
    pub stdev: f64,
    pub n: usize,
}

impl GroupStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stdev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, stdev, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStatsRow {
    pub concept: String,
    pub per_group: BTreeMap<String, GroupStats>,
    pub max_group: String,
    pub min_group: String,
}

/// Mean and sample stdev per group for every concept.
pub fn group_stats(rows: &[ConceptCountRow], groups: &BTreeMap<String, Vec<String>>) -> Result<Vec<GroupStatsRow>> {
    if groups.is_empty() {
        return Err(Error::Precondition("no language groups given".into()));
    }
    rows.iter()
        .map(|row| {
            let mut per_group = BTreeMap::new();
            for (group, languages) in groups {
                let values = languages
                    .iter()
                    .map(|l| {
                        row.per_language.get(l).copied().ok_or_else(|| {
                            Error::Validation(format!("group {group} references language {l}, missing for {}", row.concept))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let stats = GroupStats::of(&values).ok_or_else(|| Error::Validation(format!("group {group} is empty")))?;
                per_group.insert(group.clone(), stats);
            }
            // BTreeMap order plus strict comparisons keep the lexicographically first group on ties.
            let mut max_group = None::<(&String, f64)>;
            let mut min_group = None::<(&String, f64)>;
            for (g, s) in &per_group {
                if max_group.is_none_or(|(_, m)| s.mean > m) {
                    max_group = Some((g, s.mean));
                }
                if min_group.is_none_or(|(_, m)| s.mean < m) {
                    min_group = Some((g, s.mean));
                }
            }
            Ok(GroupStatsRow {
                concept: row.concept.clone(),
                max_group: max_group.expect("groups non-empty").0.clone(),
                min_group: min_group.expect("groups non-empty").0.clone(),
                per_group,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub concept: String,
    pub max_group: String,
    pub min_group: String,
    pub gap: f64,
    /// Largest within-group stdev.
    pub max_stdev: f64,
    /// Within-group stdev pooled over groups with at least two languages.
    pub pooled_stdev: f64,
    /// `gap > pooled_stdev`.
    pub gap_exceeds_stdev: bool,
}

/// Compares the spread between group means with the spread inside groups.
pub fn cross_group_gap_report(stats: &[GroupStatsRow]) -> Vec<GapRow> {
    stats
        .iter()
        .map(|row| {
            let gap = row.per_group[&row.max_group].mean - row.per_group[&row.min_group].mean;
            let max_stdev = row.per_group.values().map(|s| s.stdev).fold(0.0, f64::max);
            let (ss, df) = row
                .per_group
                .values()
                .filter(|s| s.n >= 2)
                .fold((0.0, 0usize), |(ss, df), s| (ss + (s.n - 1) as f64 * s.stdev.powi(2), df + s.n - 1));
            let pooled_stdev = if df == 0 { 0.0 } else { (ss / df as f64).sqrt() };
            GapRow {
                concept: row.concept.clone(),
                max_group: row.max_group.clone(),
                min_group: row.min_group.clone(),
                gap,
                max_stdev,
                pooled_stdev,
                gap_exceeds_stdev: row.per_group.len() > 1 && gap > pooled_stdev,
            }
        })
        .collect()
}

/// Concept rows with `mean (stdev)` per group, followed by the gap columns.
pub fn render_group_table(stats: &[GroupStatsRow], gaps: &[GapRow]) -> String {
    let groups: Vec<&String> = stats.first().map(|r| r.per_group.keys().collect()).unwrap_or_default();
    let mut out = String::from("concept");
    for g in &groups {
        let _ = write!(out, "\t{g}");
    }
    out.push_str("\tgap\tpooled_sd\tmax_sd\tgap>sd\n");
    for (row, gap) in stats.iter().zip(gaps) {
        out.push_str(&row.concept);
        for g in &groups {
            let s = &row.per_group[*g];
            if s.n > 1 {
                let _ = write!(out, "\t{:.1} ({:.1})", s.mean, s.stdev);
            } else {
                let _ = write!(out, "\t{:.1}", s.mean);
            }
        }
        let _ = writeln!(
            out,
            "\t{:.1}\t{:.1}\t{:.1}\t{}",
            gap.gap, gap.pooled_stdev, gap.max_stdev, gap.gap_exceeds_stdev
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanEvalSheet {
    pub set_label: String,
    /// One score per caption per rater: 3 great, 2 good, 1 bad.
    pub scores: Vec<u8>,
}

impl HumanEvalSheet {
    pub fn new(set_label: impl Into<String>, scores: Vec<u8>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !(1..=3).contains(*s)) {
            return Err(Error::Validation(format!("human-eval score {s} outside 1..=3")));
        }
        Ok(Self {
            set_label: set_label.into(),
            scores,
        })
    }
}

/// CSV `set_label,caption_id,rater,score`; one sheet per set label in order of first appearance.
pub fn load_human_eval(path: impl AsRef<Path>) -> Result<Vec<HumanEvalSheet>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut scores: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("set_label")) {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let [label, _caption, _rater, score] = cells[..] else {
            return Err(Error::parse(path, i + 1, "expected 4 columns"));
        };
        let score: u8 = score
            .parse()
            .ok()
            .filter(|s| (1..=3).contains(s))
            .ok_or_else(|| Error::parse(path, i + 1, format!("score {score:?} must be 1, 2 or 3")))?;
        if !scores.contains_key(label) {
            order.push(label.to_string());
        }
        scores.entry(label.to_string()).or_default().push(score);
    }
    Ok(order
        .into_iter()
        .map(|label| {
            let s = scores.remove(&label).unwrap_or_default();
            HumanEvalSheet { set_label: label, scores: s }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub set_label: String,
    pub n: usize,
    pub ternary_mean: f64,
    /// Share of scores that are good or great.
    pub binary_mean: f64,
}

pub fn human_eval_aggregate(sheet: &HumanEvalSheet) -> Result<HumanEvalSummary> {
    let n = sheet.scores.len();
    if n == 0 {
        return Err(Error::Precondition(format!("human-eval sheet {} is empty", sheet.set_label)));
    }
    let sum: u64 = sheet.scores.iter().map(|s| u64::from(*s)).sum();
    let good = sheet.scores.iter().filter(|s| **s >= 2).count();
    Ok(HumanEvalSummary {
        set_label: sheet.set_label.clone(),
        n,
        ternary_mean: sum as f64 / n as f64,
        binary_mean: good as f64 / n as f64,
    })
}
