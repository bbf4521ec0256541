//! Seeded input generators shared by the benchmarks.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlcap::recognition::{LabelScoreTable, Labels};
use xlcap::EmbeddingTable;

/// Image table, caption table and pairing with `per_image` captions each.
/// Captions sit near their image so recall is neither 0 nor 100.
pub fn retrieval_set(
    images: usize,
    per_image: usize,
    dim: usize,
    seed: u64,
) -> (EmbeddingTable, EmbeddingTable, HashMap<String, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img_rows: Vec<Vec<f64>> = (0..images)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut cap_ids = Vec::new();
    let mut cap_rows = Vec::new();
    let mut pairing = HashMap::new();
    for (i, row) in img_rows.iter().enumerate() {
        for n in 0..per_image {
            let id = format!("{i}#{n}");
            cap_rows.push(row.iter().map(|x| x + rng.random_range(-0.8..0.8)).collect());
            pairing.insert(id.clone(), format!("{i}.jpg"));
            cap_ids.push(id);
        }
    }
    let img_ids = (0..images).map(|i| format!("{i}.jpg")).collect();
    (
        EmbeddingTable::from_rows(img_ids, img_rows, dim).unwrap(),
        EmbeddingTable::from_rows(cap_ids, cap_rows, dim).unwrap(),
        pairing,
    )
}

/// Score table in the 0..60 range with truth sets drawn from the scores.
pub fn recognition_set(images: usize, classes: usize, seed: u64) -> (LabelScoreTable, Labels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..images).map(|i| format!("{i}.jpg")).collect();
    let names: Vec<String> = (0..classes).map(|c| format!("class{c}")).collect();
    let mut truth = Labels::new();
    let mut rows = Vec::with_capacity(images);
    for id in &ids {
        let row: Vec<f64> = (0..classes).map(|_| rng.random_range(0.0..60.0)).collect();
        let present: BTreeSet<String> = row
            .iter()
            .zip(&names)
            .filter(|(s, _)| **s + rng.random_range(-15.0..15.0) > 35.0)
            .map(|(_, n)| n.clone())
            .collect();
        truth.insert(id.clone(), present);
        rows.push(row);
    }
    (LabelScoreTable::new(ids, names, rows).unwrap(), truth)
}
