use std::collections::BTreeMap;
use std::path::PathBuf;

use kbagym_core::metrics::{
    aggregate, em, em_strict_score, f1, results_csv, rhits1, rhits1_pick, score_question, QuestionResult, RhitsMode,
};
use proptest::prelude::*;
use serde::Deserialize;

const TOL: f64 = 1e-9;

#[derive(Deserialize)]
struct HandRow {
    id: String,
    category: Option<String>,
    predicted: Vec<String>,
    gold: Vec<String>,
    f1: f64,
    em: f64,
    em_strict: f64,
    rhits1: f64,
}

#[derive(Deserialize)]
struct HandSheet {
    questions: Vec<HandRow>,
    overall: BTreeMap<String, f64>,
    per_category: BTreeMap<String, BTreeMap<String, f64>>,
}

fn sheet() -> HandSheet {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metrics_hand_scored.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn scored(sheet: &HandSheet) -> Vec<QuestionResult> {
    sheet
        .questions
        .iter()
        .map(|q| score_question(&q.id, &q.predicted, &q.gold, q.category.clone(), RhitsMode::Expectation).unwrap())
        .collect()
}

#[test]
fn per_question_values_match_hand_scores() {
    let s = sheet();
    for (r, q) in scored(&s).iter().zip(&s.questions) {
        assert!((r.f1 - q.f1).abs() < TOL, "{} f1 {} vs {}", q.id, r.f1, q.f1);
        assert_eq!(r.em, q.em, "{} em", q.id);
        assert_eq!(r.em_strict, q.em_strict, "{} em_strict", q.id);
        assert!((r.rhits1 - q.rhits1).abs() < TOL, "{} rhits1", q.id);
    }
}

#[test]
fn report_matches_hand_means() {
    let s = sheet();
    let report = aggregate(&scored(&s));
    assert_eq!(report.n.overall, 10);
    for (m, v) in &s.overall {
        assert!((report.overall[m] - v).abs() < TOL, "overall {m}");
    }
    assert_eq!(report.per_category.len(), s.per_category.len());
    for (c, metrics) in &s.per_category {
        for (m, v) in metrics {
            assert!((report.per_category[c][m] - v).abs() < TOL, "{c} {m}");
        }
    }
    assert_eq!(report.n.per_category["c3"], 3);
}

#[test]
fn csv_has_one_row_per_question() {
    let csv = results_csv(&scored(&sheet()));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id,category,f1,em,rhits1");
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[9], "q09,,0.4,1,1");
}

#[test]
fn documented_examples() {
    assert!((f1(&["A1"], &["A1", "A2"]).unwrap() - 0.6667).abs() < 1e-4);
    assert_eq!(rhits1(&["A1", "Z"], &["A1"], RhitsMode::Expectation, "k"), 0.5);
    let empty: [&str; 0] = [];
    assert_eq!(rhits1(&empty, &["A1"], RhitsMode::Sampled { seed: 3 }, "k"), 0.0);
}

#[test]
fn sampled_mode_is_seeded() {
    let pred = ["A", "B", "C", "D"];
    let a = rhits1(&pred, &["A"], RhitsMode::Sampled { seed: 11 }, "q1");
    let b = rhits1(&pred, &["A"], RhitsMode::Sampled { seed: 11 }, "q1");
    assert_eq!(a, b);
    let hits: usize = (0..400u64)
        .map(|s| rhits1(&pred, &["A"], RhitsMode::Sampled { seed: s }, "q1") as usize)
        .sum();
    // one in four draws hits
    assert!((60..=140).contains(&hits), "{hits}");
}

fn pool() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["A", "B", "C", "D", "E", "a"]), 0..=4)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn gold() -> impl Strategy<Value = Vec<String>> {
    pool().prop_filter("gold", |g| !g.is_empty())
}

proptest! {
    #[test]
    fn expectation_equals_exhaustive_sampling(pred in pool(), gold in gold()) {
        let expected = rhits1(&pred, &gold, RhitsMode::Expectation, "k");
        let mut distinct: Vec<String> = Vec::new();
        for p in &pred {
            let n = p.trim().to_lowercase();
            if !distinct.contains(&n) {
                distinct.push(n);
            }
        }
        let exhaustive = if distinct.is_empty() {
            0.0
        } else {
            (0..distinct.len()).map(|i| rhits1_pick(&pred, &gold, i)).sum::<f64>() / distinct.len() as f64
        };
        prop_assert!((expected - exhaustive).abs() < 1e-12);
    }

    #[test]
    fn metric_relations(pred in pool(), gold in gold()) {
        let f = f1(&pred, &gold).unwrap();
        let strict = em_strict_score(&pred, &gold);
        prop_assert!(em(&pred, &gold) >= strict);
        prop_assert_eq!(f == 1.0, strict == 1.0);
        for v in [f, em(&pred, &gold), rhits1(&pred, &gold, RhitsMode::Expectation, "k")] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn aggregate_is_permutation_invariant(rows in prop::collection::vec((pool(), gold(), prop::option::of(0u8..3)), 1..12), rot in 0usize..12) {
        let results: Vec<QuestionResult> = rows
            .iter()
            .enumerate()
            .map(|(i, (p, g, c))| score_question(&format!("q{i}"), p, g, c.map(|c| format!("c{c}")), RhitsMode::Expectation).unwrap())
            .collect();
        let mut shuffled = results.clone();
        shuffled.rotate_left(rot % results.len());
        shuffled.reverse();
        prop_assert_eq!(aggregate(&results), aggregate(&shuffled));
        let report = aggregate(&results);
        let mean_f1 = results.iter().map(|r| r.f1).sum::<f64>() / results.len() as f64;
        prop_assert!((report.overall["f1"] - mean_f1).abs() < 1e-12);
    }
}
