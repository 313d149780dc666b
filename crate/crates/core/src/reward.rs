//! Outcome reward: format bonus plus an F-beta answer score under a phased
//! beta schedule, capped, with optional per-event process penalties.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::DEFAULT_TYPE_PREDICATE;
use crate::protocol::{Termination, Trajectory};
use crate::sparql::TIMEOUT_PREFIX;

const FREEBASE_BASE: &str = "http://rdf.freebase.com/ns/";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("gold answer set is empty")]
    EmptyGold,
    #[error("invalid reward config: {0}")]
    Config(String),
}

/// Trimmed, case-folded form used for answer membership.
pub fn normalize_answer(s: &str) -> String {
    caseless::default_case_fold_str(s.trim())
}

fn answer_set<S: AsRef<str>>(items: &[S]) -> HashSet<String> {
    items
        .iter()
        .map(|s| normalize_answer(s.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Weighted harmonic mean of precision and recall over de-duplicated,
/// normalized answer sets. Zero when nothing is predicted or nothing overlaps.
pub fn f_beta<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G], beta: f64) -> Result<f64, RewardError> {
    let gold = answer_set(gold);
    if gold.is_empty() {
        return Err(RewardError::EmptyGold);
    }
    let pred = answer_set(predicted);
    let hits = pred.intersection(&gold).count();
    if pred.is_empty() || hits == 0 {
        return Ok(0.0);
    }
    let precision = hits as f64 / pred.len() as f64;
    let recall = hits as f64 / gold.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * precision * recall / (b2 * precision + recall))
}

/// 1.0 when any predicted answer is gold.
pub fn any_hit<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> Result<f64, RewardError> {
    let gold = answer_set(gold);
    if gold.is_empty() {
        return Err(RewardError::EmptyGold);
    }
    let pred = answer_set(predicted);
    Ok(if pred.is_disjoint(&gold) { 0.0 } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub beta: f64,
    pub start_step: u64,
    /// Exclusive; `None` leaves the phase open-ended.
    #[serde(default)]
    pub end_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub per_event: f64,
    pub floor: f64,
    pub hallucination_enabled: bool,
    pub timeout_enabled: bool,
    /// Counts the initial prompt as observed history.
    pub seed_history_with_prompt: bool,
    pub type_predicate: String,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            per_event: -0.2,
            floor: -0.5,
            hallucination_enabled: true,
            timeout_enabled: true,
            seed_history_with_prompt: true,
            type_predicate: DEFAULT_TYPE_PREDICATE.to_string(),
        }
    }
}

impl PenaltyConfig {
    pub fn penalty(&self, events: usize) -> f64 {
        (self.per_event * events as f64).max(self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerRewardMode {
    #[default]
    FBeta,
    /// 1.0 iff the prediction shares any answer with gold.
    ExactMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub format_reward_value: f64,
    pub phase_schedule: Vec<Phase>,
    pub cap: f64,
    pub penalties: Option<PenaltyConfig>,
    pub answer_mode: AnswerRewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            format_reward_value: 0.1,
            phase_schedule: two_phase_schedule(100, 0.6),
            cap: 1.0,
            penalties: None,
            answer_mode: AnswerRewardMode::FBeta,
        }
    }
}

/// Precision-leaning phase (beta 0.5) for the first `fraction` of
/// `total_steps`, then F1 for the rest.
pub fn two_phase_schedule(total_steps: u64, fraction: f64) -> Vec<Phase> {
    let boundary = (total_steps as f64 * fraction).round() as u64;
    vec![
        Phase {
            name: "phase1".into(),
            beta: 0.5,
            start_step: 0,
            end_step: Some(boundary),
        },
        Phase {
            name: "phase2".into(),
            beta: 1.0,
            start_step: boundary,
            end_step: None,
        },
    ]
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let err = |m: String| Err(RewardError::Config(m));
        if self.phase_schedule.is_empty() {
            return err("phase_schedule is empty".into());
        }
        let mut expected_start = 0;
        for (i, p) in self.phase_schedule.iter().enumerate() {
            if !(p.beta > 0.0) {
                return err(format!("phase {} has non-positive beta", p.name));
            }
            if p.start_step != expected_start {
                return err(format!("phase {} must start at step {expected_start}", p.name));
            }
            match p.end_step {
                Some(end) if end <= p.start_step => return err(format!("phase {} is empty", p.name)),
                Some(end) => expected_start = end,
                None if i + 1 != self.phase_schedule.len() => {
                    return err(format!("only the last phase may be open-ended, not {}", p.name))
                }
                None => {}
            }
        }
        if let Some(p) = &self.penalties {
            if p.per_event > 0.0 || p.floor > 0.0 {
                return err("penalty per_event and floor must be non-positive".into());
            }
        }
        Ok(())
    }

    /// Phase active at `global_step`; steps past a closed schedule stay in
    /// the last phase.
    pub fn phase_at(&self, global_step: u64) -> &Phase {
        self.phase_schedule
            .iter()
            .find(|p| global_step >= p.start_step && p.end_step.is_none_or(|e| global_step < e))
            .unwrap_or_else(|| self.phase_schedule.last().expect("validated schedule"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_fmt: f64,
    pub r_ans: f64,
    pub penalty: f64,
    pub total: f64,
    pub phase: String,
    pub beta_used: f64,
    #[serde(default)]
    pub hallucinations: usize,
    #[serde(default)]
    pub timeouts: usize,
}

pub fn format_reward(trajectory: &Trajectory, config: &RewardConfig) -> f64 {
    if trajectory.terminated_by == Termination::Answer && trajectory.final_answers.is_some() {
        config.format_reward_value
    } else {
        0.0
    }
}

/// Maximal runs of identifier characters in `text`, dots trimmed.
fn identifier_runs(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
        .map(|r| r.trim_matches('.'))
        .filter(|r| !r.is_empty())
}

fn is_schema_identifier(token: &str) -> bool {
    let segments: Vec<&str> = token.split('.').collect();
    segments.len() >= 2
        && segments.iter().all(|s| !s.is_empty())
        && token.starts_with(|c: char| c.is_ascii_alphabetic())
}

fn is_entity_id(token: &str) -> bool {
    token.starts_with("m.") || token.starts_with("g.")
}

/// Relations and types referenced by a SPARQL argument.
pub fn schema_identifiers<'a>(sparql: &'a str, type_predicate: &'a str) -> Vec<&'a str> {
    identifier_runs(sparql)
        .filter(|t| is_schema_identifier(t) && !is_entity_id(t) && *t != type_predicate)
        .filter(|t| !FREEBASE_BASE.contains(*t))
        .collect()
}

/// Tool calls that mention a relation or type absent from every earlier
/// observation (and the prompt, when given).
pub fn count_hallucinations(trajectory: &Trajectory, prompt_text: Option<&str>, type_predicate: &str) -> usize {
    let mut seen: HashSet<&str> = HashSet::new();
    if let Some(p) = prompt_text {
        seen.extend(identifier_runs(p));
    }
    let mut count = 0;
    for turn in &trajectory.turns {
        if let crate::protocol::Step::Action(action) = &turn.step {
            if let Some(sparql) = action.arguments.get("sparql") {
                let ids = schema_identifiers(sparql, type_predicate);
                if ids.iter().any(|id| !seen.contains(id)) {
                    count += 1;
                }
            }
        }
        if let Some(obs) = &turn.observation {
            seen.extend(identifier_runs(obs));
        }
    }
    count
}

pub fn count_timeouts(trajectory: &Trajectory) -> usize {
    trajectory
        .observations()
        .filter(|o| o.starts_with(TIMEOUT_PREFIX))
        .count()
}

/// Combined reward. `prompt_text` seeds the hallucination history when the
/// penalty config asks for it.
pub fn total_reward<G: AsRef<str>>(
    trajectory: &Trajectory,
    gold: &[G],
    config: &RewardConfig,
    global_step: u64,
    prompt_text: Option<&str>,
) -> Result<RewardBreakdown, RewardError> {
    let phase = config.phase_at(global_step);
    let r_fmt = format_reward(trajectory, config);
    let r_ans = match (&trajectory.final_answers, r_fmt > 0.0) {
        (Some(pred), true) => match config.answer_mode {
            AnswerRewardMode::FBeta => f_beta(pred, gold, phase.beta)?,
            AnswerRewardMode::ExactMatch => any_hit(pred, gold)?,
        },
        _ => {
            if answer_set(gold).is_empty() {
                return Err(RewardError::EmptyGold);
            }
            0.0
        }
    };
    let (mut hallucinations, mut timeouts, mut penalty) = (0, 0, 0.0);
    if let Some(p) = &config.penalties {
        if p.hallucination_enabled {
            let seed = if p.seed_history_with_prompt { prompt_text } else { None };
            hallucinations = count_hallucinations(trajectory, seed, &p.type_predicate);
        }
        if p.timeout_enabled {
            timeouts = count_timeouts(trajectory);
        }
        penalty = p.penalty(hallucinations + timeouts);
    }
    Ok(RewardBreakdown {
        r_fmt,
        r_ans,
        penalty,
        total: (r_fmt + r_ans).min(config.cap) + penalty,
        phase: phase.name.clone(),
        beta_used: phase.beta,
        hallucinations,
        timeouts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_beta_examples() {
        let f = |p: &[&str], g: &[&str], b| f_beta(p, g, b).unwrap();
        assert!((f(&["A1"], &["A1", "A2"], 0.5) - 0.8333).abs() < 1e-4);
        assert!((f(&["A1", "A2", "A3", "A4"], &["A1", "A2"], 0.5) - 0.5556).abs() < 1e-4);
        assert_eq!(f(&["a", "b"], &["b", "a"], 2.0), 1.0);
        assert_eq!(f(&["x"], &["y"], 1.0), 0.0);
        assert_eq!(f(&[], &["y"], 1.0), 0.0);
        assert_eq!(f(&[" Brenda SONG "], &["brenda song"], 1.0), 1.0);
        assert_eq!(f_beta::<&str, &str>(&["a"], &[], 1.0), Err(RewardError::EmptyGold));
    }

    #[test]
    fn schedule_resolution() {
        let c = RewardConfig::default();
        c.validate().unwrap();
        assert_eq!(c.phase_at(0).beta, 0.5);
        assert_eq!(c.phase_at(59).beta, 0.5);
        assert_eq!(c.phase_at(60).beta, 1.0);
        assert_eq!(c.phase_at(10_000).name, "phase2");
        let mut bad = c.clone();
        bad.phase_schedule[1].start_step = 61;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identifiers() {
        let q = "SELECT ?x WHERE { VALUES ?e {ns:m.07g8r3} . ?e ns:film.actor.film ?c . ?c ns:type.object.type ns:education.university . <http://rdf.freebase.com/ns/g.11b> ns:people.person.age \"1.5\" }";
        assert_eq!(
            schema_identifiers(q, DEFAULT_TYPE_PREDICATE),
            ["film.actor.film", "education.university", "people.person.age"]
        );
        assert!(!is_schema_identifier("1.5"));
    }
}
