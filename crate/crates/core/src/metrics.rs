//! Per-question F1, EM and RHits@1, with overall and per-category means.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::{em_hit, em_strict, sub_seed};
use crate::reward::{f_beta, normalize_answer, RewardError};

pub const METRICS: [&str; 4] = ["f1", "em", "em_strict", "rhits1"];

pub fn f1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> Result<f64, RewardError> {
    f_beta(predicted, gold, 1.0)
}

pub fn em<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> f64 {
    if em_hit(predicted, gold) { 1.0 } else { 0.0 }
}

pub fn em_strict_score<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> f64 {
    if em_strict(predicted, gold) { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum RhitsMode {
    #[default]
    Expectation,
    Sampled { seed: u64 },
}

/// De-duplicated normalized predictions in first-seen order.
fn distinct_predictions<P: AsRef<str>>(predicted: &[P]) -> Vec<String> {
    let mut seen = HashSet::new();
    predicted
        .iter()
        .map(|p| normalize_answer(p.as_ref()))
        .filter(|p| !p.is_empty() && seen.insert(p.clone()))
        .collect()
}

/// Hit indicator when the `index`-th distinct prediction is chosen.
pub fn rhits1_pick<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G], index: usize) -> f64 {
    let preds = distinct_predictions(predicted);
    let gold: HashSet<String> = gold.iter().map(|g| normalize_answer(g.as_ref())).collect();
    match preds.get(index) {
        Some(p) if gold.contains(p) => 1.0,
        _ => 0.0,
    }
}

/// Expected hit rate of one uniformly drawn prediction, or one seeded draw.
/// `key` separates the draws of different questions.
pub fn rhits1<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G], mode: RhitsMode, key: &str) -> f64 {
    let preds = distinct_predictions(predicted);
    if preds.is_empty() {
        return 0.0;
    }
    match mode {
        RhitsMode::Expectation => {
            let gold: HashSet<String> = gold.iter().map(|g| normalize_answer(g.as_ref())).collect();
            preds.iter().filter(|p| gold.contains(*p)).count() as f64 / preds.len() as f64
        }
        RhitsMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "rhits1", key));
            rhits1_pick(predicted, gold, rng.random_range(0..preds.len()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub f1: f64,
    pub em: f64,
    pub em_strict: f64,
    pub rhits1: f64,
}

impl QuestionResult {
    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "f1" => self.f1,
            "em" => self.em,
            "em_strict" => self.em_strict,
            "rhits1" => self.rhits1,
            other => panic!("unknown metric {other}"),
        }
    }
}

pub fn score_question(
    id: &str,
    predicted: &[String],
    gold: &[String],
    category: Option<String>,
    mode: RhitsMode,
) -> Result<QuestionResult, RewardError> {
    Ok(QuestionResult {
        id: id.to_string(),
        predicted: predicted.to_vec(),
        gold: gold.to_vec(),
        category,
        f1: f1(predicted, gold)?,
        em: em(predicted, gold),
        em_strict: em_strict_score(predicted, gold),
        rhits1: rhits1(predicted, gold, mode, id),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub overall: usize,
    pub per_category: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: BTreeMap<String, f64>,
    pub per_category: BTreeMap<String, BTreeMap<String, f64>>,
    pub n: Counts,
}

/// Mean with summation over sorted values, so the result does not depend
/// on input order.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn means(results: &[&QuestionResult]) -> BTreeMap<String, f64> {
    METRICS
        .iter()
        .map(|m| (m.to_string(), stable_mean(results.iter().map(|r| r.metric(m)).collect())))
        .collect()
}

pub fn aggregate(results: &[QuestionResult]) -> MetricsReport {
    let all: Vec<&QuestionResult> = results.iter().collect();
    let mut by_cat: BTreeMap<String, Vec<&QuestionResult>> = BTreeMap::new();
    for r in results {
        if let Some(c) = &r.category {
            by_cat.entry(c.clone()).or_default().push(r);
        }
    }
    MetricsReport {
        overall: means(&all),
        per_category: by_cat.iter().map(|(c, rs)| (c.clone(), means(rs))).collect(),
        n: Counts {
            overall: results.len(),
            per_category: by_cat.iter().map(|(c, rs)| (c.clone(), rs.len())).collect(),
        },
    }
}

/// Per-question rows: `id,category,f1,em,rhits1`.
pub fn results_csv(results: &[QuestionResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "category", "f1", "em", "rhits1"]).expect("in-memory write");
    for r in results {
        w.write_record([
            r.id.as_str(),
            r.category.as_deref().unwrap_or(""),
            &r.f1.to_string(),
            &r.em.to_string(),
            &r.rhits1.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// One prediction line: `{"id": .., "answers": [..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answers: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(f1(&["a"], &["a"]).unwrap(), 1.0);
        assert!((f1(&["A1"], &["A1", "A2"]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1::<&str, &str>(&[], &["a"]).unwrap(), 0.0);
        assert_eq!(rhits1(&["A1"], &["A1", "A2"], RhitsMode::Expectation, "q"), 1.0);
        assert_eq!(rhits1(&["A1", "Z"], &["A1"], RhitsMode::Expectation, "q"), 0.5);
        assert_eq!(rhits1::<&str, &str>(&[], &["A1"], RhitsMode::Expectation, "q"), 0.0);
    }

    #[test]
    fn aggregate_by_category() {
        let r = |id: &str, cat: &str, v: f64| QuestionResult {
            id: id.into(),
            predicted: vec![],
            gold: vec!["g".into()],
            category: Some(cat.into()),
            f1: v,
            em: v,
            em_strict: v,
            rhits1: v,
        };
        let report = aggregate(&[r("1", "a", 1.0), r("2", "b", 0.0)]);
        assert_eq!(report.overall["f1"], 0.5);
        assert_eq!(report.per_category["a"]["f1"], 1.0);
        assert_eq!(report.n.per_category["b"], 1);
        let csv = results_csv(&[r("x,1", "a", 1.0)]);
        assert_eq!(csv, "id,category,f1,em,rhits1\n\"x,1\",a,1,1,1\n");
    }
}
