//! The three agent-facing tools: type search, graph-pattern search and
//! SPARQL execution. Every tool returns an observation string; failures are
//! rendered as diagnostics instead of being raised.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{IdPattern, KnowledgeBase, Term, TermId, DEFAULT_TYPE_PREDICATE};
use crate::sparql::{evaluate, parse_query, quote, render_results, EvalLimits, SparqlError};

pub const DEFAULT_TOP_K: usize = 10;
pub const MAX_PATTERNS: usize = 10;
pub const MAX_RESULT_ITEMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolName {
    SearchTypes,
    SearchGraphPatterns,
    #[serde(rename = "ExecuteSPARQL")]
    ExecuteSparql,
}

impl ToolName {
    pub const ALL: [ToolName; 3] = [
        ToolName::SearchTypes,
        ToolName::SearchGraphPatterns,
        ToolName::ExecuteSparql,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::SearchTypes => "SearchTypes",
            ToolName::SearchGraphPatterns => "SearchGraphPatterns",
            ToolName::ExecuteSparql => "ExecuteSPARQL",
        }
    }

    /// Argument that must be present for a call to be valid.
    pub fn required_argument(self) -> &'static str {
        match self {
            ToolName::SearchTypes => "query",
            ToolName::SearchGraphPatterns | ToolName::ExecuteSparql => "sparql",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tool {s:?}"))
    }
}

// ---------------------------------------------------------------- similarity

/// Lowercases and splits on `.`, `_`, `/` and whitespace, rejoining tokens
/// with single spaces.
pub fn normalize(s: &str) -> String {
    tokens(s).join(" ")
}

fn tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| c == '.' || c == '_' || c == '/' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn trigrams(s: &str) -> BTreeSet<[char; 3]> {
    let chars: Vec<char> = s.chars().collect();
    chars.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
}

/// Dice coefficient over character trigram sets of the normalized strings.
pub fn trigram_dice(a: &str, b: &str) -> f64 {
    let (na, nb) = (normalize(a), normalize(b));
    if na.chars().count() < 3 || nb.chars().count() < 3 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    let (ta, tb) = (trigrams(&na), trigrams(&nb));
    let shared = ta.intersection(&tb).count();
    2.0 * shared as f64 / (ta.len() + tb.len()) as f64
}

/// Jaccard index over normalized token sets.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<String> = tokens(a).into_iter().collect();
    let tb: BTreeSet<String> = tokens(b).into_iter().collect();
    if ta.is_empty() || tb.is_empty() {
        return if ta == tb { 1.0 } else { 0.0 };
    }
    let shared = ta.intersection(&tb).count();
    shared as f64 / ta.union(&tb).count() as f64
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

/// Scores by cosine similarity of vectors from an OpenAI-compatible
/// `/embeddings` endpoint. Any failure falls back to trigram Dice.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RemoteEmbedding {
    pub endpoint_url: String,
    pub model: String,
    #[serde(with = "crate::util::duration_secs")]
    pub timeout: Duration,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

fn default_api_key_env() -> String {
    "KBAGYM_API_KEY".to_string()
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedding {
    pub fn embed(&self, inputs: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()?;
        let url = format!("{}/embeddings", self.endpoint_url.trim_end_matches('/'));
        let mut req = client
            .post(url)
            .json(&serde_json::json!({"model": self.model, "input": inputs}));
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp: EmbeddingResponse = req.send()?.error_for_status()?.json()?;
        if resp.data.len() != inputs.len() {
            return Err(EmbeddingError::Malformed(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                resp.data.len()
            )));
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }

    pub fn score(&self, a: &str, b: &str) -> f64 {
        if a == b && !a.is_empty() {
            return 1.0;
        }
        match self.embed(&[a, b]) {
            Ok(v) => cosine(&v[0], &v[1]).clamp(0.0, 1.0),
            Err(e) => {
                log::warn!("{e}; falling back to trigram similarity");
                trigram_dice(a, b)
            }
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimilarityScorer {
    #[default]
    TrigramDice,
    TokenJaccard,
    RemoteEmbedding(RemoteEmbedding),
}

impl SimilarityScorer {
    pub fn score(&self, a: &str, b: &str) -> f64 {
        match self {
            SimilarityScorer::TrigramDice => trigram_dice(a, b),
            SimilarityScorer::TokenJaccard => token_jaccard(a, b),
            SimilarityScorer::RemoteEmbedding(r) => r.score(a, b),
        }
    }
}

// ---------------------------------------------------------------- tool config

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ToolConfig {
    pub type_predicate: String,
    pub search_types_k: usize,
    pub max_patterns: usize,
    pub max_result_items: usize,
    pub scorer: SimilarityScorer,
    pub limits: EvalLimits,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            type_predicate: DEFAULT_TYPE_PREDICATE.to_string(),
            search_types_k: DEFAULT_TOP_K,
            max_patterns: MAX_PATTERNS,
            max_result_items: MAX_RESULT_ITEMS,
            scorer: SimilarityScorer::TrigramDice,
            limits: EvalLimits::default(),
        }
    }
}

// ---------------------------------------------------------------- SearchTypes

/// Top-`k` type IRIs by similarity to `query`, ties by ascending IRI.
pub fn search_types(
    kb: &KnowledgeBase,
    query: &str,
    k: usize,
    type_predicate: &str,
    scorer: &SimilarityScorer,
) -> Vec<(String, f64)> {
    let Some(pred) = Term::iri(type_predicate).ok().and_then(|t| kb.id_of(&t)) else {
        return Vec::new();
    };
    let types: BTreeSet<&str> = kb
        .match_ids(IdPattern {
            predicate: Some(pred),
            ..Default::default()
        })
        .into_iter()
        .map(|(_, _, o)| kb.term(o))
        .filter(|t| t.is_iri())
        .map(Term::value)
        .collect();
    let mut scored: Vec<(String, f64)> = types
        .into_iter()
        .map(|t| (t.to_string(), scorer.score(query, t)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn render_types(types: &[(String, f64)]) -> String {
    let items: Vec<String> = types.iter().map(|(t, _)| quote(t)).collect();
    format!("[{}]", items.join(", "))
}

// --------------------------------------------------------- SearchGraphPatterns

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorRole {
    Head,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub anchor_role: AnchorRole,
    pub path: Vec<String>,
    pub sample_value: Term,
    pub support: usize,
}

impl PatternSummary {
    pub fn path_text(&self) -> String {
        self.path.join(".")
    }

    pub fn render(&self, anchor_var: &str, kb: &KnowledgeBase) -> String {
        let sample = render_sample(&self.sample_value, kb);
        let path = self.path.join(" -> ");
        match self.anchor_role {
            AnchorRole::Head => format!("(?{anchor_var}, {path}, {sample})"),
            AnchorRole::Tail => format!("({sample}, {path}, ?{anchor_var})"),
        }
    }
}

/// Labeled IRIs and literals render double-quoted; unlabeled IRIs bare.
pub fn render_sample(term: &Term, kb: &KnowledgeBase) -> String {
    match term {
        Term::Iri { value } => match kb.label_of(term).ok().flatten() {
            Some(label) => quote(label),
            None => value.clone(),
        },
        Term::Literal { value, .. } => quote(value),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSearch {
    pub anchor_var: String,
    pub patterns: Vec<PatternSummary>,
}

struct Acc {
    support: usize,
    sample: TermId,
}

/// Deadline poll interval while walking neighbourhoods.
const WALK_POLL: usize = 4096;

/// Evaluates `sketch`, then enumerates and ranks the one- and two-hop
/// patterns around the anchor bindings.
pub fn find_graph_patterns(
    kb: &KnowledgeBase,
    sketch: &str,
    semantic: Option<&str>,
    cfg: &ToolConfig,
) -> Result<PatternSearch, SparqlError> {
    let start = Instant::now();
    let ast = parse_query(sketch)?;
    let rs = evaluate(&ast, kb, &cfg.limits)?;
    let anchor_var = if rs.columns.iter().any(|c| c == "x") {
        "x".to_string()
    } else if rs.columns.len() == 1 {
        rs.columns[0].clone()
    } else {
        return Err(SparqlError::Contract(
            "the sketch must select ?x or exactly one variable".into(),
        ));
    };
    let anchors: BTreeSet<TermId> = rs
        .column(&anchor_var)
        .expect("anchor column")
        .into_iter()
        .filter_map(|t| kb.id_of(t))
        .collect();

    let mut acc: HashMap<(AnchorRole, Vec<TermId>), Acc> = HashMap::new();
    let mut steps = 0usize;
    let mut record = |role, path: Vec<TermId>, value: TermId| -> Result<(), SparqlError> {
        steps += 1;
        if steps % WALK_POLL == 0 {
            let elapsed = start.elapsed();
            if elapsed > cfg.limits.timeout {
                return Err(SparqlError::Timeout {
                    limit: cfg.limits.timeout,
                    elapsed,
                });
            }
        }
        acc.entry((role, path))
            .and_modify(|a| {
                a.support += 1;
                a.sample = a.sample.min(value);
            })
            .or_insert(Acc {
                support: 1,
                sample: value,
            });
        Ok(())
    };
    let out = |s| {
        kb.match_ids(IdPattern {
            subject: Some(s),
            ..Default::default()
        })
    };
    let inc = |o| {
        kb.match_ids(IdPattern {
            object: Some(o),
            ..Default::default()
        })
    };
    for &a in &anchors {
        for (_, p1, m) in out(a) {
            record(AnchorRole::Head, vec![p1], m)?;
            if m == a {
                continue;
            }
            for (_, p2, o) in out(m) {
                record(AnchorRole::Head, vec![p1, p2], o)?;
            }
        }
        for (s, p2, _) in inc(a) {
            record(AnchorRole::Tail, vec![p2], s)?;
            if s == a {
                continue;
            }
            for (s0, p1, _) in inc(s) {
                record(AnchorRole::Tail, vec![p1, p2], s0)?;
            }
        }
    }

    let mut patterns: Vec<(Option<f64>, PatternSummary)> = acc
        .into_iter()
        .map(|((role, path), a)| {
            let summary = PatternSummary {
                anchor_role: role,
                path: path.iter().map(|&p| kb.term(p).value().to_string()).collect(),
                sample_value: kb.term(a.sample).clone(),
                support: a.support,
            };
            let score = semantic.map(|s| cfg.scorer.score(s, &summary.path_text()));
            (score, summary)
        })
        .collect();
    patterns.sort_by(|(sa, a), (sb, b)| {
        let by_score = match (sa, sb) {
            (Some(x), Some(y)) => y.total_cmp(x),
            _ => std::cmp::Ordering::Equal,
        };
        by_score
            .then(b.support.cmp(&a.support))
            .then_with(|| a.path.cmp(&b.path))
            .then(a.anchor_role.cmp(&b.anchor_role))
    });
    patterns.truncate(cfg.max_patterns);
    Ok(PatternSearch {
        anchor_var,
        patterns: patterns.into_iter().map(|(_, p)| p).collect(),
    })
}

pub fn search_graph_patterns(
    kb: &KnowledgeBase,
    sketch: &str,
    semantic: Option<&str>,
    cfg: &ToolConfig,
) -> String {
    match find_graph_patterns(kb, sketch, semantic, cfg) {
        Ok(found) => {
            let items: Vec<String> = found
                .patterns
                .iter()
                .map(|p| p.render(&found.anchor_var, kb))
                .collect();
            format!("[{}]", items.join(", "))
        }
        Err(e) => e.to_string(),
    }
}

// --------------------------------------------------------------- ExecuteSPARQL

pub fn execute_sparql(kb: &KnowledgeBase, text: &str, cfg: &ToolConfig) -> String {
    let result = parse_query(text).and_then(|ast| evaluate(&ast, kb, &cfg.limits));
    match result {
        Ok(rs) => render_results(&rs, kb, cfg.max_result_items),
        Err(e) => e.to_string(),
    }
}

// ---------------------------------------------------------------- dispatch

/// Runs `tool` with string arguments. Missing optional arguments are
/// treated as absent; missing required ones produce a diagnostic.
pub fn run_tool(
    kb: &KnowledgeBase,
    tool: ToolName,
    arguments: &std::collections::BTreeMap<String, String>,
    cfg: &ToolConfig,
) -> String {
    let Some(required) = arguments.get(tool.required_argument()) else {
        return format!(
            "Invalid response format: missing argument {:?} for {tool}. Please follow the required output format.",
            tool.required_argument()
        );
    };
    match tool {
        ToolName::SearchTypes => render_types(&search_types(
            kb,
            required,
            cfg.search_types_k,
            &cfg.type_predicate,
            &cfg.scorer,
        )),
        ToolName::SearchGraphPatterns => search_graph_patterns(
            kb,
            required,
            arguments.get("semantic").map(String::as_str).filter(|s| !s.trim().is_empty()),
            cfg,
        ),
        ToolName::ExecuteSparql => execute_sparql(kb, required, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{KbFormat, DEFAULT_LABEL_PREDICATE};

    fn kb(text: &str) -> KnowledgeBase {
        KnowledgeBase::parse(text, KbFormat::Tsv, DEFAULT_LABEL_PREDICATE).unwrap()
    }

    #[test]
    fn similarity_basics() {
        assert_eq!(trigram_dice("actor", "actor"), 1.0);
        assert_eq!(trigram_dice("actor", "zzzz"), 0.0);
        assert_eq!(trigram_dice("ab", "AB"), 1.0);
        assert_eq!(trigram_dice("ab", "abc"), 0.0);
        assert_eq!(token_jaccard("film.actor", "actor film"), 1.0);
        assert_eq!(token_jaccard("film.actor", "film"), 0.5);
        assert_eq!(normalize("  Film.Performance/ACTOR_x "), "film performance actor x");
    }

    #[test]
    fn tool_names_round_trip() {
        for t in ToolName::ALL {
            assert_eq!(t.as_str().parse::<ToolName>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert!("Frobnicate".parse::<ToolName>().is_err());
    }

    #[test]
    fn search_types_self_similarity_first() {
        let kb = kb("a\ttype.object.type\tpeople.person\nb\ttype.object.type\teducation.university\n");
        let got = search_types(&kb, "people.person", 10, DEFAULT_TYPE_PREDICATE, &SimilarityScorer::TrigramDice);
        assert_eq!(got[0], ("people.person".to_string(), 1.0));
        assert_eq!(got.len(), 2);
        assert!(search_types(&KnowledgeBase::empty(DEFAULT_LABEL_PREDICATE), "x", 10, DEFAULT_TYPE_PREDICATE, &SimilarityScorer::TrigramDice).is_empty());
    }

    #[test]
    fn two_hop_pattern_rendering() {
        let kb = kb("m.07g8r3\tfilm.film_character.portrayed_in_films\tcvt1\n\
                     cvt1\tfilm.performance.actor\tm.0btps\n\
                     m.0btps\ttype.object.name\t\"Brenda Song\"\n");
        let out = search_graph_patterns(
            &kb,
            "SELECT ?e WHERE { VALUES ?e {ns:m.07g8r3} }",
            Some("actor/performer"),
            &ToolConfig::default(),
        );
        assert!(
            out.contains("(?e, film.film_character.portrayed_in_films -> film.performance.actor, \"Brenda Song\")"),
            "{out}"
        );
        assert!(out.contains("(?e, film.film_character.portrayed_in_films, cvt1)"), "{out}");
    }

    #[test]
    fn tail_patterns_render_anchor_last() {
        let kb = kb("a\tp\tx1\nb\tq\ta\n");
        let out = search_graph_patterns(&kb, "SELECT ?x WHERE { VALUES ?x {ns:x1} }", None, &ToolConfig::default());
        assert_eq!(out, "[(a, p, ?x), (b, q -> p, ?x)]");
    }

    #[test]
    fn tool_errors_are_observations() {
        let kb = kb("a\tp\tb\n");
        let cfg = ToolConfig::default();
        assert!(execute_sparql(&kb, "SELECT", &cfg).starts_with("SPARQL parse error"));
        assert!(search_graph_patterns(&kb, "garbage", None, &cfg).starts_with("SPARQL parse error"));
        assert!(search_graph_patterns(&kb, "SELECT ?a ?b WHERE { ?a ns:p ?b }", None, &cfg)
            .starts_with("SPARQL evaluation error"));
        assert_eq!(
            search_graph_patterns(&kb, "SELECT ?x WHERE { VALUES ?x {ns:zzz} }", None, &cfg),
            "[]"
        );
    }
}
