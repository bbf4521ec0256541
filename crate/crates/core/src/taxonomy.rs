//! WordNet-style hypernym graph.
//!
//! Loaded from a TSV with one synset per line:
//! `synset_id<TAB>lemma1|lemma2<TAB>hypernym_id1,hypernym_id2`. The third
//! column is empty (or absent) for roots. Lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synset {
    pub synset_id: String,
    pub lemmas: Vec<String>,
    pub hypernym_ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    synsets: BTreeMap<String, Synset>,
    root_ids: BTreeSet<String>,
}

/// Limits how far above a synset hypernyms are drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypernymConfig {
    /// Maximum number of hypernym edges between the synset and a candidate.
    /// `None` allows every non-root ancestor.
    #[serde(default)]
    pub max_height: Option<usize>,
}

impl Taxonomy {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_to_string(path)?).map_err(|e| match e {
            Error::Load(m) => Error::Load(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut synsets = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or("").trim();
            let lemmas = cols.next().unwrap_or("");
            let hypernyms = cols.next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::Load(format!("line {}: empty synset id", i + 1)));
            }
            let lemmas: Vec<String> = lemmas
                .split('|')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            if lemmas.is_empty() {
                return Err(Error::Load(format!("line {}: synset {id} has no lemmas", i + 1)));
            }
            let hypernym_ids = hypernyms
                .split(',')
                .map(str::trim)
                .filter(|h| !h.is_empty())
                .map(String::from)
                .collect();
            synsets.push(Synset {
                synset_id: id.to_string(),
                lemmas,
                hypernym_ids,
            });
        }
        Self::from_synsets(synsets)
    }

    /// Verifies references and acyclicity.
    pub fn from_synsets(list: Vec<Synset>) -> Result<Self> {
        let mut synsets = BTreeMap::new();
        for s in list {
            if let Some(prev) = synsets.insert(s.synset_id.clone(), s) {
                return Err(Error::Load(format!("duplicate synset {}", prev.synset_id)));
            }
        }
        for s in synsets.values() {
            for h in &s.hypernym_ids {
                if !synsets.contains_key(h) {
                    return Err(Error::Load(format!(
                        "synset {} references unknown hypernym {h}",
                        s.synset_id
                    )));
                }
            }
        }
        if let Some(cycle) = find_cycle(&synsets) {
            return Err(Error::Load(format!("hypernym cycle: {}", cycle.join(" -> "))));
        }
        let root_ids = synsets
            .values()
            .filter(|s| s.hypernym_ids.is_empty())
            .map(|s| s.synset_id.clone())
            .collect();
        Ok(Self { synsets, root_ids })
    }

    pub fn get(&self, synset_id: &str) -> Option<&Synset> {
        self.synsets.get(synset_id)
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn root_ids(&self) -> &BTreeSet<String> {
        &self.root_ids
    }

    pub fn is_root(&self, synset_id: &str) -> bool {
        self.root_ids.contains(synset_id)
    }

    fn require(&self, synset_id: &str) -> Result<&Synset> {
        self.synsets
            .get(synset_id)
            .ok_or_else(|| Error::NotFound(format!("synset {synset_id}")))
    }

    /// Strict ancestors with their shortest hypernym distance.
    fn ancestor_depths(&self, synset_id: &str) -> Result<BTreeMap<&str, usize>> {
        let start = self.require(synset_id)?;
        let mut depths = BTreeMap::new();
        let mut queue: VecDeque<(&Synset, usize)> = VecDeque::from([(start, 0)]);
        while let Some((s, d)) = queue.pop_front() {
            for h in &s.hypernym_ids {
                if !depths.contains_key(h.as_str()) {
                    depths.insert(h.as_str(), d + 1);
                    queue.push_back((&self.synsets[h], d + 1));
                }
            }
        }
        Ok(depths)
    }

    /// All strict ancestors reachable through any hypernym path.
    pub fn ancestor_set(&self, synset_id: &str, exclude_roots: bool) -> Result<BTreeSet<String>> {
        Ok(self
            .ancestor_depths(synset_id)?
            .into_keys()
            .filter(|id| !(exclude_roots && self.is_root(id)))
            .map(String::from)
            .collect())
    }

    /// Non-root ancestors eligible for substitution under `config`.
    pub fn hypernym_candidates(&self, synset_id: &str, config: &HypernymConfig) -> Result<Vec<&Synset>> {
        Ok(self
            .ancestor_depths(synset_id)?
            .into_iter()
            .filter(|(id, d)| !self.is_root(id) && config.max_height.is_none_or(|m| *d <= m))
            .map(|(id, _)| &self.synsets[id])
            .collect())
    }

    /// Uniform draw over eligible ancestors, then uniform over that synset's
    /// lemmas. Underscores in the lemma become spaces.
    pub fn sample_hypernym_lemma<R: Rng + ?Sized>(
        &self,
        synset_id: &str,
        config: &HypernymConfig,
        rng: &mut R,
    ) -> Result<HypernymDraw> {
        let candidates = self.hypernym_candidates(synset_id, config)?;
        if candidates.is_empty() {
            return Err(Error::NoHypernym(synset_id.to_string()));
        }
        let synset = candidates[rng.random_range(0..candidates.len())];
        let lemma = &synset.lemmas[rng.random_range(0..synset.lemmas.len())];
        Ok(HypernymDraw {
            synset_id: synset.synset_id.clone(),
            lemma: lemma.replace('_', " "),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypernymDraw {
    pub synset_id: String,
    pub lemma: String,
}

fn find_cycle(synsets: &BTreeMap<String, Synset>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    for root in synsets.keys() {
        if marks.contains_key(root.as_str()) {
            continue;
        }
        // iterative DFS; the stack holds (node, next child index)
        let mut stack: Vec<(&str, usize)> = vec![(root.as_str(), 0)];
        marks.insert(root, Mark::Active);
        while let Some(&(node, child)) = stack.last() {
            let hypernyms = &synsets[node].hypernym_ids;
            if child == hypernyms.len() {
                marks.insert(node, Mark::Done);
                stack.pop();
                continue;
            }
            let next = hypernyms[child].as_str();
            if let Some(top) = stack.last_mut() {
                top.1 += 1;
            }
            match marks.get(next) {
                Some(Mark::Active) => {
                    let pos = stack.iter().position(|(n, _)| *n == next).unwrap_or(0);
                    let mut cycle: Vec<String> = stack[pos..].iter().map(|(n, _)| n.to_string()).collect();
                    cycle.push(next.to_string());
                    return Some(cycle);
                }
                Some(Mark::Done) => {}
                None => {
                    marks.insert(next, Mark::Active);
                    stack.push((next, 0));
                }
            }
        }
    }
    None
}
