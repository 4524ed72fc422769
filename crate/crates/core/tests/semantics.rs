use std::f64::consts::E;
use std::path::Path;

use proptest::prelude::*;
use semsplat::fixture::{self, FixtureConfig};
use semsplat::io::load_query_embeddings;
use semsplat::semantics::{
    class_probabilities, embed_query, relevancy, relevancy_map, relevancy_scores, resolve_query, QuerySource,
};
use semsplat::{render, Error};

fn basis(dim: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn lookup() -> semsplat::io::QueryLookup {
    load_query_embeddings(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/queries.bin")).unwrap()
}

#[test]
fn exact_match_scores_e_over_one_plus_e() {
    let (q, n) = (basis(6, 0), basis(6, 3));
    let r = relevancy(&q, &q, [n.as_slice()]).unwrap();
    assert!((r - E / (1.0 + E)).abs() < 1e-9, "{r}");
}

#[test]
fn entry_orthogonal_to_query_and_equal_to_a_negative() {
    let (d, q, other) = (basis(6, 1), basis(6, 2), basis(6, 4));
    let r = relevancy(&d, &q, [other.as_slice(), d.as_slice()]).unwrap();
    assert!((r - 1.0 / (1.0 + E)).abs() < 1e-9, "{r}");
}

fn unit(v: Vec<f64>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

proptest! {
    #[test]
    fn min_over_negatives_equals_brute_force(
        d in prop::collection::vec(0.1f64..1.0, 5),
        q in prop::collection::vec(-1.0f64..1.0, 5),
        negs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 1..6),
    ) {
        prop_assume!(q.iter().any(|x| x.abs() > 0.1));
        prop_assume!(negs.iter().all(|n| n.iter().any(|x| x.abs() > 0.1)));
        let (d, q) = (unit(d), unit(q));
        let negs: Vec<Vec<f32>> = negs.into_iter().map(unit).collect();
        let got = relevancy(&d, &q, negs.iter().map(Vec::as_slice)).unwrap();
        let mut want = f64::INFINITY;
        for n in &negs {
            let (a, b) = (dot(&d, &q).exp(), dot(&d, n).exp());
            want = want.min(a / (a + b));
        }
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!(got > 0.0 && got < 1.0);
    }
}

#[test]
fn non_unit_inputs_are_rejected() {
    let q = basis(4, 0);
    let long = vec![2.0, 0.0, 0.0, 0.0];
    assert!(matches!(relevancy(&long, &q, [q.as_slice()]), Err(Error::InvalidParameter(_))));
    assert!(relevancy(&q, &q, std::iter::empty::<&[f32]>()).is_err());
}

#[test]
fn vague_prompts_resolve_to_the_stored_label() {
    let cfg = FixtureConfig::default();
    let scene = fixture::ground_truth_scene(&cfg);
    let cam = &fixture::cameras(&cfg)[0];
    let source = QuerySource {
        lookup: Some(lookup()),
        ..QuerySource::default()
    };
    for prompt in ["coffee", "tea", "coffee machine"] {
        let q = embed_query(prompt, &source, scene.embeddings.dim()).unwrap();
        let r = resolve_query(&scene, prompt, &q, cam, 0.5).unwrap();
        let top = r.top().unwrap();
        assert_eq!(top.label, "coffee machine");
        assert!(top.relevancy > 0.5);
        assert!(top.pixel_mask.iter().any(|&m| m));
        assert!(top.centroid3d.is_some());
        assert!(r.ranked.iter().all(|l| l.label != "undetected" && l.relevancy > 0.5));
    }
    let q = embed_query("car", &source, scene.embeddings.dim()).unwrap();
    assert!(resolve_query(&scene, "car", &q, cam, 0.5).unwrap().ranked.is_empty());
}

#[test]
fn ranking_is_sorted_and_threshold_is_strict() {
    let cfg = FixtureConfig::default();
    let scene = fixture::ground_truth_scene(&cfg);
    let cam = &fixture::cameras(&cfg)[1];
    let q = lookup().get("coffee").unwrap().to_vec();
    let scores = relevancy_scores(&scene.dictionary, &scene.embeddings, &q).unwrap();
    let all = resolve_query(&scene, "coffee", &q, cam, 0.0).unwrap();
    assert_eq!(all.ranked.len(), 3);
    for w in all.ranked.windows(2) {
        assert!(w[0].relevancy >= w[1].relevancy);
    }
    // A threshold equal to a score excludes that label.
    let kettle = scores.iter().find(|s| s.label == "kettle").unwrap().score;
    let r = resolve_query(&scene, "coffee", &q, cam, kettle).unwrap();
    assert!(r.ranked.iter().all(|l| l.label != "kettle"));
    assert!(resolve_query(&scene, "coffee", &q, cam, 1.0).unwrap().ranked.is_empty());
    // Masks of distinct labels never overlap.
    for (i, a) in all.ranked.iter().enumerate() {
        for b in &all.ranked[i + 1..] {
            assert!(a.pixel_mask.iter().zip(&b.pixel_mask).all(|(x, y)| !(x & y)));
        }
    }
}

#[test]
fn relevancy_map_is_expected_relevancy() {
    let cfg = FixtureConfig::default();
    let scene = fixture::ground_truth_scene(&cfg);
    let cam = &fixture::cameras(&cfg)[2];
    let out = render(&scene, cam);
    let q = lookup().get("apple").unwrap().to_vec();
    let map = relevancy_map(&scene, &out, &q).unwrap();
    let scores = relevancy_scores(&scene.dictionary, &scene.embeddings, &q).unwrap();
    for (p, m) in map.iter().enumerate() {
        let f = &out.feature[3 * p..3 * p + 3];
        let probs = class_probabilities([f[0], f[1], f[2]], &scene.head);
        let want: f64 = probs[1..].iter().zip(&scores).map(|(p, s)| *p as f64 * s.score).sum();
        assert!((m - want).abs() < 1e-9);
        assert!((0.0..1.0).contains(m));
    }
    // The peak sits on an apple pixel.
    let peak = map.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(fixture::ground_truth_labels(&scene, cam)[peak], 2);
}

#[test]
fn wrong_dimension_query_is_a_config_error() {
    let scene = fixture::ground_truth_scene(&FixtureConfig::default());
    let source = QuerySource {
        lookup: Some({
            let mut l = semsplat::io::QueryLookup::new(3);
            l.insert("short", vec![1.0, 0.0, 0.0]).unwrap();
            l
        }),
        ..QuerySource::default()
    };
    assert!(matches!(embed_query("short", &source, scene.embeddings.dim()), Err(Error::Config(_))));
    assert!(matches!(embed_query("other", &source, 8), Err(Error::EncoderUnavailable(_))));
}
