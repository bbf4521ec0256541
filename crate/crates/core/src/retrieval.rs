//! Recall@K for image→text and text→image retrieval, and mean recall.
//!
//! Candidates are ranked by cosine similarity. Ties are broken by ascending
//! candidate index so reports are identical across platforms.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

pub const RECALL_KS: [usize; 3] = [1, 5, 10];
const NORM_TOLERANCE: f64 = 1e-6;

/// Dense row-major vectors keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingTable {
    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Validation(format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::Validation(format!("row {id} has dimension {}, expected {dim}", row.len())));
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("row {id} has non-finite value {x}")));
            }
            data.extend_from_slice(row);
        }
        let mut table = Self {
            ids,
            dim,
            data,
            normalized: false,
        };
        table.normalized = (0..table.len()).all(|i| (norm(table.row(i)) - 1.0).abs() <= NORM_TOLERANCE);
        Ok(table)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The rows for `ids`, in that order.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let index: HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let &i = index
                .get(id.as_ref())
                .ok_or_else(|| Error::NotFound(format!("embedding for {}", id.as_ref())))?;
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            ids: ids.iter().map(|s| s.as_ref().to_string()).collect(),
            dim: self.dim,
            data,
            normalized: self.normalized,
        })
    }

    /// Copy with every row scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let mut data = self.data.clone();
        for (i, id) in self.ids.iter().enumerate() {
            let n = norm(self.row(i));
            if n == 0.0 {
                return Err(Error::Validation(format!("row {id} has zero norm")));
            }
            for x in &mut data[i * self.dim..(i + 1) * self.dim] {
                *x /= n;
            }
        }
        Ok(Self {
            ids: self.ids.clone(),
            dim: self.dim,
            data,
            normalized: true,
        })
    }

    /// Reads the TSV format (`n<TAB>dim` header, then `id<TAB>v1,v2,...`) or
    /// JSONL (`{"id", "vector"}` per line). JSONL is detected by a leading `{`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Self::parse_jsonl(&text, path)
        } else {
            Self::parse_tsv(&text, path)
        }
    }

    fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
        let (n, dim) = header
            .split_once('\t')
            .and_then(|(n, d)| Some((n.trim().parse::<usize>().ok()?, d.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| Error::parse(path, 1, "header must be `rows<TAB>dim`"))?;
        let mut ids = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines {
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "missing tab separator"))?;
            let row = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if row.len() != dim {
                return Err(Error::parse(path, i + 1, format!("expected {dim} values, got {}", row.len())));
            }
            ids.push(id.to_string());
            rows.push(row);
        }
        if ids.len() != n {
            return Err(Error::parse(path, 1, format!("header declares {n} rows, found {}", ids.len())));
        }
        Self::from_rows(ids, rows, dim)
    }

    fn parse_jsonl(text: &str, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            vector: Vec<f64>,
        }
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            ids.push(l.id);
            rows.push(l.vector);
        }
        let dim = rows.first().map_or(0, Vec::len);
        Self::from_rows(ids, rows, dim)
    }

    pub fn to_tsv_string(&self) -> String {
        let mut out = format!("{}\t{}\n", self.len(), self.dim);
        for (i, id) in self.ids.iter().enumerate() {
            let values: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{id}\t{}", values.join(","));
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// images × captions cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Validation("ragged similarity matrix".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

pub fn similarity_matrix(images: &EmbeddingTable, captions: &EmbeddingTable) -> Result<SimilarityMatrix> {
    if images.dim() != captions.dim() {
        return Err(Error::Validation(format!(
            "image dimension {} differs from caption dimension {}",
            images.dim(),
            captions.dim()
        )));
    }
    let images = images.normalized()?;
    let captions = captions.normalized()?;
    let mut data = Vec::with_capacity(images.len() * captions.len());
    for i in 0..images.len() {
        let a = images.row(i);
        for j in 0..captions.len() {
            data.push(a.iter().zip(captions.row(j)).map(|(x, y)| x * y).sum());
        }
    }
    Ok(SimilarityMatrix {
        rows: images.len(),
        cols: captions.len(),
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Image queries ranking captions.
    I2t,
    /// Caption queries ranking images.
    T2i,
}

fn score(sim: &SimilarityMatrix, direction: Direction, query: usize, candidate: usize) -> f64 {
    match direction {
        Direction::I2t => sim.get(query, candidate),
        Direction::T2i => sim.get(candidate, query),
    }
}

fn n_queries(sim: &SimilarityMatrix, direction: Direction) -> usize {
    match direction {
        Direction::I2t => sim.rows(),
        Direction::T2i => sim.cols(),
    }
}

fn n_candidates(sim: &SimilarityMatrix, direction: Direction) -> usize {
    match direction {
        Direction::I2t => sim.cols(),
        Direction::T2i => sim.rows(),
    }
}

/// 0-based rank of the best-ranked relevant candidate for one query.
///
/// A candidate `c` ranks ahead of `r` when it scores higher, or scores the
/// same with a smaller index.
fn first_relevant_rank(sim: &SimilarityMatrix, direction: Direction, query: usize, relevant: &[usize]) -> Result<usize> {
    let n = n_candidates(sim, direction);
    if relevant.is_empty() {
        return Err(Error::Precondition(format!("query {query} has no relevant candidates")));
    }
    if let Some(bad) = relevant.iter().find(|r| **r >= n) {
        return Err(Error::Precondition(format!("query {query} lists candidate {bad} but only {n} exist")));
    }
    let ahead = |a: (f64, usize), b: (f64, usize)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    let best = relevant
        .iter()
        .map(|&r| (score(sim, direction, query, r), r))
        .reduce(|a, b| if ahead(b, a) { b } else { a })
        .expect("relevant is non-empty");
    Ok((0..n)
        .filter(|&c| ahead((score(sim, direction, query, c), c), best))
        .count())
}

fn ranks(sim: &SimilarityMatrix, direction: Direction, queries: &[(usize, &[usize])]) -> Result<Vec<usize>> {
    queries
        .iter()
        .map(|(q, rel)| first_relevant_rank(sim, direction, *q, rel))
        .collect()
}

fn recall_from_ranks(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    100.0 * ranks.iter().filter(|r| **r < k).count() as f64 / ranks.len() as f64
}

/// Percentage of queries with a relevant candidate in their top `k`.
///
/// `truth[q]` lists the relevant candidate indices for query `q`; for `I2t`
/// queries are rows (images), for `T2i` they are columns (captions).
pub fn recall_at_k(sim: &SimilarityMatrix, truth: &[Vec<usize>], k: usize, direction: Direction) -> Result<f64> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let nq = n_queries(sim, direction);
    if truth.len() != nq {
        return Err(Error::Precondition(format!("{} truth entries for {nq} queries", truth.len())));
    }
    let queries: Vec<(usize, &[usize])> = truth.iter().enumerate().map(|(q, r)| (q, r.as_slice())).collect();
    Ok(recall_from_ranks(&ranks(sim, direction, &queries)?, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    #[serde(rename = "1")]
    pub r1: f64,
    #[serde(rename = "5")]
    pub r5: f64,
    #[serde(rename = "10")]
    pub r10: f64,
}

impl RecallAtK {
    fn from_ranks(ranks: &[usize]) -> Self {
        Self {
            r1: recall_from_ranks(ranks, 1),
            r5: recall_from_ranks(ranks, 5),
            r10: recall_from_ranks(ranks, 10),
        }
    }

    pub fn values(&self) -> [f64; 3] {
        [self.r1, self.r5, self.r10]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub r_i2t: RecallAtK,
    pub r_t2i: RecallAtK,
    pub mean_recall: f64,
    pub n_images: usize,
    pub n_captions: usize,
    pub set_label: String,
}

impl RetrievalReport {
    fn new(r_i2t: RecallAtK, r_t2i: RecallAtK, n_images: usize, n_captions: usize, set_label: String) -> Self {
        let mut report = Self {
            r_i2t,
            r_t2i,
            mean_recall: 0.0,
            n_images,
            n_captions,
            set_label,
        };
        report.mean_recall = report.rederived_mean();
        report
    }

    /// Arithmetic mean of the six stored recalls.
    pub fn rederived_mean(&self) -> f64 {
        self.r_i2t.values().iter().chain(&self.r_t2i.values()).sum::<f64>() / 6.0
    }
}

/// Scores one caption set against the image table.
///
/// `pairing` maps each caption id to its source image. Images without a
/// caption in this set still act as distractors for text→image queries but
/// issue no image→text query.
pub fn evaluate_set(
    images: &EmbeddingTable,
    captions: &EmbeddingTable,
    pairing: &HashMap<String, String>,
    set_label: &str,
) -> Result<RetrievalReport> {
    let image_index: HashMap<&str, usize> = images.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut t2i_truth = Vec::with_capacity(captions.len());
    let mut i2t_truth: Vec<Vec<usize>> = vec![Vec::new(); images.len()];
    for (j, cid) in captions.ids().iter().enumerate() {
        let image = pairing
            .get(cid)
            .ok_or_else(|| Error::Precondition(format!("caption {cid} has no paired image")))?;
        let &i = image_index
            .get(image.as_str())
            .ok_or_else(|| Error::Precondition(format!("image {image} of caption {cid} is not in the image table")))?;
        t2i_truth.push(vec![i]);
        i2t_truth[i].push(j);
    }
    let sim = similarity_matrix(images, captions)?;
    let i2t_queries: Vec<(usize, &[usize])> = i2t_truth
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(q, r)| (q, r.as_slice()))
        .collect();
    let t2i_queries: Vec<(usize, &[usize])> = t2i_truth.iter().enumerate().map(|(q, r)| (q, r.as_slice())).collect();
    let i2t = RecallAtK::from_ranks(&ranks(&sim, Direction::I2t, &i2t_queries)?);
    let t2i = RecallAtK::from_ranks(&ranks(&sim, Direction::T2i, &t2i_queries)?);
    Ok(RetrievalReport::new(i2t, t2i, images.len(), captions.len(), set_label.to_string()))
}

/// Field-wise mean over per-set reports. Caption counts are summed.
pub fn aggregate_reports(reports: &[RetrievalReport]) -> Result<RetrievalReport> {
    if reports.is_empty() {
        return Err(Error::Precondition("no reports to aggregate".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&RetrievalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(RetrievalReport {
        r_i2t: RecallAtK {
            r1: mean(&|r| r.r_i2t.r1),
            r5: mean(&|r| r.r_i2t.r5),
            r10: mean(&|r| r.r_i2t.r10),
        },
        r_t2i: RecallAtK {
            r1: mean(&|r| r.r_t2i.r1),
            r5: mean(&|r| r.r_t2i.r5),
            r10: mean(&|r| r.r_t2i.r10),
        },
        mean_recall: mean(&|r| r.mean_recall),
        n_images: reports.iter().map(|r| r.n_images).max().unwrap_or(0),
        n_captions: reports.iter().map(|r| r.n_captions).sum(),
        set_label: "aggregate".into(),
    })
}

/// Method / mean recall / delta table, deltas taken against `baseline` when it is one of the rows.
pub fn render_method_table(rows: &[(String, RetrievalReport)], baseline: Option<&str>) -> String {
    let base = baseline.and_then(|b| rows.iter().find(|(m, _)| m == b)).map(|(_, r)| r.mean_recall);
    let delta_header = match (baseline, base) {
        (Some(b), Some(_)) => format!("Vs. {b}"),
        _ => "Vs. baseline".to_string(),
    };
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("| {:<width$} | Mean Recall | {delta_header} |\n", "Method");
    let _ = writeln!(out, "|{}|-------------|{}|", "-".repeat(width + 2), "-".repeat(delta_header.len() + 2));
    for (method, report) in rows {
        let delta = match base {
            Some(b) => format_delta(report.mean_recall - b),
            None => "n/a".into(),
        };
        let _ = writeln!(
            out,
            "| {method:<width$} | {:>11.1} | {delta:>w$} |",
            report.mean_recall,
            w = delta_header.len()
        );
    }
    out
}

fn format_delta(d: f64) -> String {
    let rounded = (d * 10.0).round() / 10.0;
    if rounded > 0.0 {
        format!("+{rounded:.1}")
    } else if rounded < 0.0 {
        format!("{rounded:.1}")
    } else {
        "0.0".into()
    }
}

/// One line per report with all six recalls.
pub fn render_reports(reports: &[RetrievalReport]) -> String {
    let mut out = String::from("set\tI2T@1\tI2T@5\tI2T@10\tT2I@1\tT2I@5\tT2I@10\tmean\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            r.set_label, r.r_i2t.r1, r.r_i2t.r5, r.r_i2t.r10, r.r_t2i.r1, r.r_t2i.r5, r.r_t2i.r10, r.mean_recall
        );
    }
    out
}
