//! Checks against independent re-computations: generic JSON scans, direct
//! formulas, brute-force loops and the shared regression oracle.

mod common;
#[path = "acceptance/oracles.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet};

use caption_audit::corpus::{
    build_corpus, parse_captions, parse_instances, CaptionRecord, CaptionSource, Category,
    CategoryTable, Corpus, PresenceMap,
};
use caption_audit::regression::{
    build_design, ols_fit, pearson_r, significance_table, t_sf, DesignMatrix, Subset,
};
use caption_audit::report::{
    compare_human_model, histogram, per_image_moments, strong_breakdown, HumanJoin,
};
use caption_audit::semantics::load_embeddings;
use caption_audit::sentiment::{
    is_strong, score_corpus, ConfidenceTriple, LexiconProvider, SentimentRecord, StrongThreshold,
};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn json(name: &str) -> Value {
    serde_json::from_slice(&read(&mini().join(name))).unwrap()
}

fn mini_corpus() -> Corpus {
    let caps = parse_captions(&mini().join("captions.json")).unwrap();
    let (table, presence) = parse_instances(&mini().join("instances.json")).unwrap();
    build_corpus(caps, table, &presence).0
}

/// Counts objects in every array stored under `key`, at any depth.
fn count_under(v: &Value, key: &str) -> usize {
    match v {
        Value::Object(m) => m
            .iter()
            .map(|(k, x)| {
                let here = if k == key {
                    x.as_array().map_or(0, |a| a.len())
                } else {
                    0
                };
                here + count_under(x, key)
            })
            .sum(),
        Value::Array(a) => a.iter().map(|x| count_under(x, key)).sum(),
        _ => 0,
    }
}

#[test]
fn caption_count_matches_generic_scan() {
    let records = parse_captions(&mini().join("captions.json")).unwrap();
    assert_eq!(
        records.len(),
        count_under(&json("captions.json"), "annotations")
    );
    assert_eq!(records.len(), 43);
}

#[test]
fn presence_matches_brute_force_scan() {
    let (table, presence) = parse_instances(&mini().join("instances.json")).unwrap();
    assert_eq!(table.len(), 5);
    let raw = json("instances.json");
    let mut scan: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    for a in raw["annotations"].as_array().unwrap() {
        scan.entry(a["image_id"].as_i64().unwrap())
            .or_default()
            .insert(a["category_id"].as_i64().unwrap());
    }
    assert_eq!(presence, scan);
}

#[test]
fn per_image_caption_counts_match_tally() {
    let corpus = mini_corpus();
    let tally = json("tally.json");
    for img in corpus.images() {
        let want = tally["captions_by_image"][img.image_id.to_string()]
            .as_u64()
            .unwrap();
        assert_eq!(img.caption_ids.len() as u64, want, "image {}", img.image_id);
    }
}

#[test]
fn fixture_vectors_are_unit_norm() {
    let vecs = load_embeddings(&mini().join("hash_embeddings.ndjson")).unwrap();
    assert_eq!(vecs.len(), 43);
    for (v, _) in vecs {
        assert_eq!(v.dim(), 64);
        let norm = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn strong_design_rows_match_tally() {
    let corpus = mini_corpus();
    let (scores, _) = score_corpus(&corpus, &LexiconProvider, None, 1).unwrap();
    let (x, y) = build_design(
        &corpus,
        &scores,
        Subset::StrongOnly,
        StrongThreshold::default(),
    )
    .unwrap();
    assert_eq!(
        x.rows() as u64,
        json("tally.json")["strong_captions"].as_u64().unwrap()
    );
    assert_eq!(y.len(), x.rows());
}

#[test]
fn moments_match_direct_formula() {
    let corpus = mini_corpus();
    let (scores, _) = score_corpus(&corpus, &LexiconProvider, None, 1).unwrap();
    for m in per_image_moments(&scores, &corpus).unwrap() {
        let s: Vec<f64> = corpus
            .image(m.image_id)
            .unwrap()
            .caption_ids
            .iter()
            .map(|c| scores[c].score)
            .collect();
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((m.mean_score - mean).abs() <= 1e-12);
        assert!((m.sd_score - var.sqrt()).abs() <= 1e-12);
    }
}

fn covariance_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn pearson_matches_covariance_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..50 {
        let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.3 * v + rng.gen_range(-2.0..2.0))
            .collect();
        assert!((pearson_r(&x, &y).unwrap() - covariance_r(&x, &y)).abs() <= 1e-12);
    }
}

#[test]
fn fixture_comparison_matches_pearson_oracle() {
    let m = mini();
    let caps = parse_captions(&m.join("captions.json")).unwrap();
    let (table, presence) = parse_instances(&m.join("instances.json")).unwrap();
    let human = build_corpus(caps, table.clone(), &presence).0;
    let model_caps = caption_audit::corpus::parse_captions_with_source(
        &m.join("model_captions.json"),
        CaptionSource::Model,
    )
    .unwrap();
    let model = build_corpus(model_caps, table, &presence).0;
    let (hs, _) = score_corpus(&human, &LexiconProvider, None, 1).unwrap();
    let (ms, _) = score_corpus(&model, &LexiconProvider, None, 1).unwrap();
    let cmp = compare_human_model(
        &hs,
        &ms,
        &human,
        &model,
        StrongThreshold::default(),
        HumanJoin::Mean,
    )
    .unwrap();

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for img in human.images() {
        if let Some(mimg) = model.image(img.image_id) {
            let h: Vec<f64> = img.caption_ids.iter().map(|c| hs[c].score).collect();
            xs.push(h.iter().sum::<f64>() / h.len() as f64);
            ys.push(ms[&mimg.caption_ids[0]].score);
        }
    }
    assert_eq!(cmp.n_pairs, xs.len());
    assert!((cmp.pearson_r.unwrap() - covariance_r(&xs, &ys)).abs() <= 1e-12);
}

#[test]
fn random_system_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (n, k) = (40, 3);
    let preds: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.5 + 1.5 * preds[i * k] - 0.02 * preds[i * k + 2] + rng.gen_range(-0.3..0.3))
        .collect();
    let x = DesignMatrix::with_intercept(&preds, vec!["a".into(), "b".into(), "c".into()]);
    let fit = ols_fit(&x, &y).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
    let oracle = oracles::normal_equations(&rows, &y);
    for j in 0..=k {
        assert!((fit.beta[j] - oracle.beta[j]).abs() <= 1e-8);
        assert!((fit.se[j] - oracle.se[j]).abs() <= 1e-6);
        assert!((fit.t_stat[j] - oracle.t[j]).abs() <= 1e-6);
        assert!((fit.p_value[j] - oracle.p[j]).abs() <= 1e-6);
    }
    let flags = significance_table(&fit, 0.01);
    let want: Vec<bool> = oracle.p[1..].iter().map(|p| *p < 0.01).collect();
    assert_eq!(
        flags.iter().map(|f| f.significant).collect::<Vec<_>>(),
        want
    );
    assert!(want.iter().any(|f| *f) && want.iter().any(|f| !*f));
}

#[test]
fn t_tail_at_two_with_ten_df() {
    let want = oracles::t_two_sided(2.0, 10);
    assert!((t_sf(2.0, 10).unwrap() - want).abs() <= 1e-8);
    assert!((want - 0.07338803477074283).abs() < 1e-10);
}

/// Bin by scanning the edges one at a time.
fn brute_bins(values: &[f64], lo: f64, hi: f64, n: usize) -> (Vec<u64>, u64, u64) {
    let w = (hi - lo) / n as f64;
    let mut counts = vec![0; n];
    let (mut under, mut over) = (0, 0);
    for &v in values {
        if v.is_nan() || v > hi {
            over += 1;
        } else if v < lo {
            under += 1;
        } else {
            let mut placed = false;
            for b in 0..n {
                let right = if b + 1 == n {
                    hi
                } else {
                    lo + (b + 1) as f64 * w
                };
                if v < right || (b + 1 == n && v <= hi) {
                    counts[b] += 1;
                    placed = true;
                    break;
                }
            }
            assert!(placed);
        }
    }
    (counts, under, over)
}

#[test]
fn histogram_matches_brute_force_binning() {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut values: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    // exact edges, both ends and out-of-range values
    values.extend((0..=40).map(|b| -1.0 + b as f64 * 0.05));
    values.extend([-1.0, 1.0, 1.5, -1.5, f64::NAN]);
    let h = histogram(&values, -1.0, 1.0, 40).unwrap();
    let (counts, under, over) = brute_bins(&values, -1.0, 1.0, 40);
    assert_eq!(h.counts, counts);
    assert_eq!((h.underflow, h.overflow), (under, over));
    assert_eq!(h.total(), values.len() as u64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_conserves_observations(
        values in proptest::collection::vec(-3.0f64..3.0, 0..300),
        lo in -2.0f64..0.0,
        width in 0.01f64..3.0,
        n in 1usize..60,
    ) {
        let h = histogram(&values, lo, lo + width, n).unwrap();
        prop_assert_eq!(h.total(), values.len() as u64);
        let (counts, under, over) = brute_bins(&values, lo, lo + width, n);
        prop_assert_eq!(h.counts, counts);
        prop_assert_eq!((h.underflow, h.overflow), (under, over));
    }
}

fn scored_corpus(
    caps_per_image: &[usize],
    scores: &[f64],
) -> (Corpus, BTreeMap<i64, SentimentRecord>) {
    let mut caps = Vec::new();
    let mut map = BTreeMap::new();
    let mut id = 0usize;
    for (img, &n) in caps_per_image.iter().enumerate() {
        for _ in 0..n {
            let y = scores[id % scores.len()];
            id += 1;
            caps.push(CaptionRecord {
                caption_id: id as i64,
                image_id: img as i64,
                text: String::new(),
                source: CaptionSource::Human,
            });
            let (p, g) = (y.max(0.0), (-y).max(0.0));
            let t = ConfidenceTriple::new(g, 1.0 - p - g, p).unwrap();
            map.insert(id as i64, SentimentRecord::new(id as i64, t, "p@1"));
        }
    }
    let table = CategoryTable::new(vec![Category {
        category_id: 1,
        name: "x".into(),
        supercategory: "x".into(),
    }])
    .unwrap();
    (build_corpus(caps, table, &PresenceMap::new()).0, map)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn breakdown_sum_rules(
        caps in proptest::collection::vec(1usize..6, 1..10_000),
        scores in proptest::collection::vec(prop_oneof![Just(0.5), Just(-0.5), -1.0f64..=1.0], 1..64),
    ) {
        let (corpus, map) = scored_corpus(&caps, &scores);
        let th = StrongThreshold::default();
        let b = strong_breakdown(&map, &corpus, th).unwrap();
        let strong = map.values().filter(|r| is_strong(r.score, th)).count() as u64;
        prop_assert_eq!(b.captions_strong, strong);
        prop_assert_eq!(b.by_multiplicity.iter().map(|(k, m)| k * m).sum::<u64>(), strong);
        prop_assert_eq!(b.by_multiplicity.values().sum::<u64>(), b.images_with_strong);
        prop_assert!(b.images_with_strong <= corpus.image_count() as u64);
    }
}
