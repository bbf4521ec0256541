use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use xlcap::analytics::{group_stats, human_eval_aggregate, mention_ratio, ConceptCountRow, HumanEvalSheet};
use xlcap::augment::{caption_rng, hypernymize_caption, parse_final, HyperConfig, TraceEdit};
use xlcap::gateway::{request_key, Backend, BackendReply, Capability, ProviderMeta};
use xlcap::recognition::{predict_objects, sweep_threshold, micro_counts, LabelScoreTable, Labels, THRESHOLD_GRID};
use xlcap::retrieval::{recall_at_k, Direction, SimilarityMatrix, evaluate_set};
use xlcap::vocab::pluralize;
use xlcap::{
    load_flickr_tokens, make_splits, CacheStore, Corpus, EmbeddingTable, Gateway,
    HypernymConfig, ImageRef, ObjectVocabulary, ProviderRequest, Taxonomy,
};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn vocab() -> &'static ObjectVocabulary {
    static V: OnceLock<ObjectVocabulary> = OnceLock::new();
    V.get_or_init(|| ObjectVocabulary::load(data("coco80_vocab.json")).unwrap())
}

fn taxonomy() -> &'static Taxonomy {
    static T: OnceLock<Taxonomy> = OnceLock::new();
    T.get_or_init(|| Taxonomy::load(data("wordnet_taxonomy.tsv")).unwrap())
}

fn fixture_english() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| load_flickr_tokens(data("fixtures/flickr_en.token"), "en").unwrap())
}

fn corpus_of(n: usize) -> Corpus {
    Corpus::new("p", (0..n).map(|i| ImageRef::new(format!("{i}"))).collect(), Vec::new()).unwrap()
}

// corpus

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_the_corpus(n in 4usize..2_000, seed: u64) {
        let corpus = corpus_of(n);
        let s = make_splits(&corpus, seed).unwrap();
        let parts = [&s.reference, &s.train, &s.val, &s.test];
        let mut union = BTreeSet::new();
        for p in parts {
            prop_assert!(!p.is_empty());
            for id in p {
                prop_assert!(union.insert(id.clone()), "{} in two splits", id);
            }
        }
        prop_assert_eq!(union, corpus.image_ids().map(String::from).collect::<BTreeSet<_>>());
        prop_assert_eq!(make_splits(&corpus, seed).unwrap(), s);
    }

    #[test]
    fn corpus_json_round_trips(captions in prop::collection::vec(("[a-z]{1,3}", 0u8..5, "[A-Za-z ]{0,12}[a-z]"), 0..20)) {
        let mut seen = HashSet::new();
        let mut lines = String::new();
        for (img, n, text) in &captions {
            if seen.insert((img.clone(), *n)) {
                lines.push_str(&format!("{img}.jpg#{n}\t{text}\n"));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.token");
        std::fs::write(&path, lines).unwrap();
        let corpus = load_flickr_tokens(&path, "en").unwrap();
        let keys: HashSet<_> = corpus.captions.iter().map(|c| (&c.image_id, c.set_index, &c.language)).collect();
        prop_assert_eq!(keys.len(), corpus.captions.len());
        let back: Corpus = serde_json::from_str(&corpus.to_json_string().unwrap()).unwrap();
        prop_assert_eq!(back, corpus);
    }
}

// vocabulary

fn words() -> impl Strategy<Value = String> {
    let pool: Vec<String> = vocab()
        .classes()
        .iter()
        .flat_map(|c| vocab().forms_of(&c.name))
        .chain(["a", "the", "on", "with", "Two", "near", "red", "hot", "game", "."].map(String::from))
        .collect();
    prop::collection::vec((prop::sample::select(pool), any::<bool>()), 0..14).prop_map(|ws| {
        ws.into_iter()
            .map(|(w, upper)| if upper { w.to_uppercase() } else { w })
            .collect::<Vec<_>>()
            .join(" ")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mention_spans_are_sorted_and_disjoint(text in words()) {
        let spans = vocab().detect_mentions(&text);
        for pair in spans.windows(2) {
            prop_assert!(pair[0].token_end <= pair[1].token_start, "{:?}", pair);
        }
        for s in &spans {
            prop_assert!(s.token_start < s.token_end);
        }
    }

    #[test]
    fn detection_ignores_case(text in words()) {
        let key = |t: &str| -> Vec<_> {
            vocab().detect_mentions(t).into_iter().map(|m| (m.class_name, m.token_start, m.token_end, m.plural)).collect()
        };
        prop_assert_eq!(key(&text), key(&text.to_lowercase()));
    }
}

#[test]
fn generated_plural_detects_its_class() {
    for class in vocab().classes() {
        if class.name.contains(' ') {
            continue;
        }
        let p = pluralize(&class.name);
        let spans = vocab().detect_mentions(&p);
        assert_eq!(spans.len(), 1, "{p}: {spans:?}");
        assert_eq!(spans[0].class_name, class.name, "{p}");
    }
}

// taxonomy and HYPER

fn synsets() -> Vec<String> {
    vocab().classes().iter().filter_map(|c| c.synset_id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sampled_lemma_belongs_to_an_ancestor(idx in 0usize..1_000, seed: u64, height in prop::option::of(1usize..6)) {
        let all = synsets();
        let s = &all[idx % all.len()];
        let config = HypernymConfig { max_height: height };
        let ancestors = taxonomy().ancestor_set(s, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match taxonomy().sample_hypernym_lemma(s, &config, &mut rng) {
            Ok(draw) => {
                prop_assert!(ancestors.contains(&draw.synset_id));
                let lemmas = &taxonomy().get(&draw.synset_id).unwrap().lemmas;
                prop_assert!(lemmas.iter().any(|l| l.replace('_', " ") == draw.lemma));
                let mut again = ChaCha8Rng::seed_from_u64(seed);
                prop_assert_eq!(taxonomy().sample_hypernym_lemma(s, &config, &mut again).unwrap(), draw);
            }
            Err(e) => prop_assert!(height.is_some() || ancestors.is_empty(), "{}", e),
        }
    }

    #[test]
    fn hypernym_ancestors_are_inherited(idx in 0usize..1_000) {
        let all = synsets();
        let s = &all[idx % all.len()];
        let mine = taxonomy().ancestor_set(s, false).unwrap();
        for h in &taxonomy().get(s).unwrap().hypernym_ids {
            prop_assert!(mine.contains(h));
            prop_assert!(taxonomy().ancestor_set(h, false).unwrap().is_subset(&mine));
        }
    }

    #[test]
    fn hyper_edits_verify_on_fixture_captions(idx in 0usize..500, seed: u64) {
        let captions = &fixture_english().captions;
        let c = &captions[idx % captions.len()];
        let mut rng = caption_rng(seed, &c.caption_id);
        if let Some(a) = hypernymize_caption(c, vocab(), taxonomy(), &HyperConfig::default(), &mut rng).unwrap() {
            prop_assert_ne!(&a.text_en, &c.text);
            for e in &a.trace {
                if let TraceEdit::Hypernym { class_name, surface, source_synset, ancestor_synset, .. } = e {
                    prop_assert_eq!(Some(source_synset), vocab().class(class_name).unwrap().synset_id.as_ref());
                    prop_assert!(vocab().forms_of(class_name).contains(&surface.to_lowercase()));
                    prop_assert!(taxonomy().ancestor_set(source_synset, true).unwrap().contains(ancestor_synset));
                }
            }
        }
    }

    #[test]
    fn parse_final_inverts_tagging(x in "[^<>]{0,40}", prefix in "[^<>]{0,20}", suffix in "[^<>]{0,20}") {
        prop_assume!(!x.trim().is_empty());
        let wrapped = format!("{prefix}<final>{x}</final>{suffix}");
        prop_assert_eq!(parse_final(&wrapped).unwrap(), x.trim());
    }
}

// gateway

struct Counting {
    calls: Mutex<Vec<String>>,
}

impl Backend for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn call(&self, request: &ProviderRequest) -> xlcap::Result<BackendReply> {
        self.calls.lock().unwrap().push(request.request_key.clone());
        Ok(BackendReply {
            body: json!({"text": request.payload["text"].as_str().unwrap_or("x").to_uppercase()}),
            meta: ProviderMeta {
                backend_name: "counting".into(),
                model_name: "upper".into(),
                settings: Value::Null,
            },
        })
    }
}

fn shuffled_object(pairs: &[(String, i64)], reverse: bool) -> Value {
    let mut m = serde_json::Map::new();
    let iter: Box<dyn Iterator<Item = &(String, i64)>> = if reverse { Box::new(pairs.iter().rev()) } else { Box::new(pairs.iter()) };
    for (k, v) in iter {
        m.insert(k.clone(), json!(v));
    }
    Value::Object(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backend_sees_each_uncached_key_once(pre in prop::collection::vec(0usize..8, 0..4), seq in prop::collection::vec(0usize..8, 0..30)) {
        let dir = tempfile::tempdir().unwrap();
        let req = |i: usize| ProviderRequest::translate("en", "de", &format!("text {i}"));
        let warm = Gateway::new(CacheStore::new(dir.path()), Some(Arc::new(Counting { calls: Mutex::new(Vec::new()) })));
        for &i in &pre {
            warm.call(&req(i)).unwrap();
        }
        let backend = Arc::new(Counting { calls: Mutex::new(Vec::new()) });
        let g = Gateway::new(CacheStore::new(dir.path()), Some(backend.clone()));
        for r in g.call_many(&seq.iter().map(|&i| req(i)).collect::<Vec<_>>()) {
            r.unwrap();
        }
        let called: Vec<String> = backend.calls.lock().unwrap().clone();
        let expected: BTreeSet<String> = seq.iter().filter(|i| !pre.contains(i)).map(|&i| req(i).request_key).collect();
        prop_assert_eq!(called.len(), expected.len());
        prop_assert_eq!(called.into_iter().collect::<BTreeSet<_>>(), expected);
    }

    #[test]
    fn request_key_ignores_key_order(pairs in prop::collection::btree_map("[a-z]{1,6}", any::<i64>(), 0..8)) {
        let pairs: Vec<(String, i64)> = pairs.into_iter().collect();
        let a = json!({"outer": shuffled_object(&pairs, false), "z": 1});
        let b = json!({"z": 1, "outer": shuffled_object(&pairs, true)});
        prop_assert_eq!(request_key(Capability::Chat, &a), request_key(Capability::Chat, &b));
    }
}

// retrieval

fn sim_and_truth() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (1usize..12, 1usize..4).prop_flat_map(|(n_img, per)| {
        let n_cap = n_img * per;
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n_cap), n_img),
            Just((0..n_cap).map(|j| j / per).collect::<Vec<_>>()),
        )
    })
}

fn truths(owner: &[usize], n_img: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let i2t = (0..n_img).map(|i| (0..owner.len()).filter(|j| owner[*j] == i).collect()).collect();
    let t2i = owner.iter().map(|o| vec![*o]).collect();
    (i2t, t2i)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn recall_is_monotone_in_k((rows, owner) in sim_and_truth()) {
        let (i2t, t2i) = truths(&owner, rows.len());
        let sim = SimilarityMatrix::from_rows(rows).unwrap();
        for (truth, dir) in [(&i2t, Direction::I2t), (&t2i, Direction::T2i)] {
            let mut last = 0.0;
            for k in 1..=12 {
                let r = recall_at_k(&sim, truth, k, dir).unwrap();
                prop_assert!(r >= last && r <= 100.0);
                last = r;
            }
        }
    }

    #[test]
    fn recall_ignores_scale_and_caption_order(
        dim in 2usize..6,
        n_img in 1usize..10,
        seed: u64,
        scale in 0.01f64..100.0,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
        let img = v(n_img);
        let cap = v(n_img * 2);
        let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let pairing: HashMap<String, String> = (0..cap.len()).map(|j| (format!("c{j}"), format!("i{}", j / 2))).collect();
        let images = EmbeddingTable::from_rows(ids("i", n_img), img.clone(), dim).unwrap();
        let captions = EmbeddingTable::from_rows(ids("c", cap.len()), cap.clone(), dim).unwrap();
        let Ok(base) = evaluate_set(&images, &captions, &pairing, "x") else { return Ok(()) };

        let scaled = |rows: &[Vec<f64>]| rows.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect::<Vec<Vec<f64>>>();
        let images2 = EmbeddingTable::from_rows(ids("i", n_img), scaled(&img), dim).unwrap();
        let captions2 = EmbeddingTable::from_rows(ids("c", cap.len()), scaled(&cap), dim).unwrap();
        let s = evaluate_set(&images2, &captions2, &pairing, "x").unwrap();
        prop_assert_eq!(s.r_i2t, base.r_i2t);
        prop_assert_eq!(s.r_t2i, base.r_t2i);

        let order: Vec<usize> = (0..cap.len()).rev().collect();
        let perm_ids: Vec<String> = order.iter().map(|j| format!("c{j}")).collect();
        let perm = captions.select(&perm_ids).unwrap();
        let p = evaluate_set(&images, &perm, &pairing, "x").unwrap();
        // ties resolve by index, so only compare when scores are distinct
        let distinct = {
            let sim: Vec<f64> = img.iter().flat_map(|a| cap.iter().map(move |b| {
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
            })).collect();
            let mut sorted = sim.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.windows(2).all(|w| w[1] - w[0] > 1e-12)
        };
        if distinct {
            prop_assert_eq!(p.r_i2t, base.r_i2t);
            prop_assert_eq!(p.r_t2i, base.r_t2i);
        }
    }
}

// recognition

fn score_table() -> impl Strategy<Value = (LabelScoreTable, Labels)> {
    (1usize..15, 1usize..5).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..60.0, c), n),
            prop::collection::vec(prop::collection::vec(any::<bool>(), c), n),
        )
            .prop_map(move |(rows, present)| {
                let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
                let classes: Vec<String> = (0..c).map(|j| format!("k{j}")).collect();
                let truth = ids
                    .iter()
                    .zip(&present)
                    .map(|(id, p)| {
                        (id.clone(), classes.iter().zip(p).filter(|(_, b)| **b).map(|(k, _)| k.clone()).collect())
                    })
                    .collect();
                (LabelScoreTable::new(ids, classes, rows).unwrap(), truth)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn raising_threshold_shrinks_predictions((table, truth) in score_table(), a in 0.0f64..60.0, b in 0.0f64..60.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = predict_objects(&table, lo);
        let p_hi = predict_objects(&table, hi);
        for (id, set) in &p_hi {
            prop_assert!(set.is_subset(&p_lo[id]));
        }
        let r = |t| micro_counts(&table, &truth, t).unwrap().recall().unwrap_or(0.0);
        prop_assert!(r(hi) <= r(lo));

        // filtering at lo then hi equals filtering at hi
        let filtered: Labels = p_lo
            .iter()
            .map(|(id, set)| {
                let i = table.image_ids().iter().position(|x| x == id).unwrap();
                let kept = set
                    .iter()
                    .filter(|c| table.row(i)[table.class_names().iter().position(|k| k == *c).unwrap()] > hi)
                    .cloned()
                    .collect();
                (id.clone(), kept)
            })
            .collect();
        prop_assert_eq!(filtered, p_hi);
    }

    #[test]
    fn sweep_picks_a_grid_maximizer((table, truth) in score_table()) {
        let s = sweep_threshold(&table, &truth).unwrap();
        prop_assert!(THRESHOLD_GRID.contains(&s.threshold));
        for t in THRESHOLD_GRID {
            prop_assert!(s.f1 >= micro_counts(&table, &truth, t).unwrap().f1());
        }
    }
}

// analytics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn group_stats_ignore_language_order(values in prop::collection::vec(0.0f64..500.0, 2..10), seed: u64) {
        use rand::seq::SliceRandom;
        let langs: Vec<String> = (0..values.len()).map(|i| format!("l{i}")).collect();
        let row = ConceptCountRow {
            concept: "tree".into(),
            per_language: langs.iter().cloned().zip(values.iter().copied()).collect(),
        };
        let mut shuffled = langs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let half = langs.len() / 2;
        let groups = |ls: &[String]| -> BTreeMap<String, Vec<String>> {
            let (a, b): (Vec<_>, Vec<_>) = ls.iter().cloned().partition(|l| langs[..half].contains(l));
            BTreeMap::from([("a".into(), a), ("b".into(), b)])
        };
        let x = group_stats(std::slice::from_ref(&row), &groups(&langs)).unwrap();
        let y = group_stats(std::slice::from_ref(&row), &groups(&shuffled)).unwrap();
        for g in ["a", "b"] {
            let (p, q) = (&x[0].per_group[g], &y[0].per_group[g]);
            prop_assert!((p.mean - q.mean).abs() < 1e-9 && (p.stdev - q.stdev).abs() < 1e-9);
        }
    }

    #[test]
    fn self_ratio_is_one(counts in prop::collection::btree_map("[a-z]{1,5}", 0usize..50, 1..10)) {
        prop_assume!(counts.values().sum::<usize>() > 0);
        let r = mention_ratio(&counts, &counts).unwrap();
        prop_assert!((r.overall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_mean_bounds_ternary_mean(scores in prop::collection::vec(1u8..=3, 1..200)) {
        let s = human_eval_aggregate(&HumanEvalSheet::new("x", scores).unwrap()).unwrap();
        prop_assert!(s.binary_mean >= (s.ternary_mean - 1.0) / 2.0 - 1e-12);
    }
}

#[test]
fn hyper_never_emits_unchanged_captions_over_fixture_seeds() {
    let corpus = fixture_english();
    let mut emitted = 0;
    for seed in 0..50 {
        for c in &corpus.captions {
            let mut rng = caption_rng(seed, &c.caption_id);
            if let Some(a) = hypernymize_caption(c, vocab(), taxonomy(), &HyperConfig::default(), &mut rng).unwrap() {
                assert_ne!(a.text_en, c.text);
                emitted += 1;
            }
        }
    }
    assert!(emitted > 0);
}
