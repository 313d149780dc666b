//! Cold-start data preparation: outcome-based rejection sampling, the
//! per-question cap, category balancing and loss-masked SFT export.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::policy::wrap_observation;
use crate::protocol::{PromptTemplates, QuestionRecord, Termination, Trajectory, SCHEMA_VERSION};
use crate::reward::normalize_answer;

pub const MAX_PER_QUESTION: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("category {0:?} has a positive target but no kept trajectories")]
    EmptyCategory(String),
    #[error("question {0:?} has no category label")]
    MissingCategory(String),
}

fn normalized_set<S: AsRef<str>>(items: &[S]) -> HashSet<String> {
    items
        .iter()
        .map(|s| normalize_answer(s.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// At least one predicted answer is gold.
pub fn em_hit<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> bool {
    !normalized_set(predicted).is_disjoint(&normalized_set(gold))
}

/// Predicted and gold sets are equal.
pub fn em_strict<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> bool {
    let p = normalized_set(predicted);
    !p.is_empty() && p == normalized_set(gold)
}

/// Every predicted answer occurs in some observation of the trajectory.
pub fn evidence_grounded(trajectory: &Trajectory) -> bool {
    let Some(answers) = &trajectory.final_answers else {
        return false;
    };
    let observations: Vec<String> = trajectory.observations().map(normalize_answer).collect();
    answers.iter().all(|a| {
        let a = normalize_answer(a);
        observations.iter().any(|o| o.contains(&a))
    })
}

pub fn passes_filter(trajectory: &Trajectory, record: &QuestionRecord) -> bool {
    trajectory.terminated_by == Termination::Answer
        && trajectory
            .final_answers
            .as_ref()
            .is_some_and(|a| em_hit(a, &record.golden_answers))
        && evidence_grounded(trajectory)
}

/// Correct, grounded candidates; shortest first (ties by input order), at
/// most `cap`.
pub fn rejection_filter(candidates: &[Trajectory], record: &QuestionRecord, cap: usize) -> Vec<Trajectory> {
    let mut kept: Vec<(usize, &Trajectory)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, t)| passes_filter(t, record))
        .collect();
    kept.sort_by_key(|(i, t)| (t.turns.len(), *i));
    kept.into_iter().take(cap).map(|(_, t)| t.clone()).collect()
}

/// Named sub-seed derived from the run seed.
pub fn sub_seed(seed: u64, purpose: &str, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update([0]);
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedDataset {
    pub trajectories: Vec<Trajectory>,
    /// Realized trajectory count per category.
    pub realized: BTreeMap<String, usize>,
}

/// Seeded resampling so each targeted category holds exactly its target.
/// Down-sampling keeps pool order; up-sampling appends whole-trajectory
/// duplicates drawn by cycling a seeded permutation. Untargeted categories
/// pass through.
pub fn balance_dataset(
    kept: &BTreeMap<String, Vec<Trajectory>>,
    categories: &BTreeMap<String, String>,
    targets: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<BalancedDataset, PipelineError> {
    let mut pools: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for (qid, trajs) in kept {
        let cat = categories
            .get(qid)
            .ok_or_else(|| PipelineError::MissingCategory(qid.clone()))?;
        pools.entry(cat.as_str()).or_default().extend(trajs.iter());
    }
    for (cat, &target) in targets {
        if target > 0 && pools.get(cat.as_str()).is_none_or(|p| p.is_empty()) {
            return Err(PipelineError::EmptyCategory(cat.clone()));
        }
        pools.entry(cat.as_str()).or_default();
    }
    let mut out = BalancedDataset {
        trajectories: Vec::new(),
        realized: BTreeMap::new(),
    };
    for (cat, pool) in pools {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "balance", cat));
        let chosen: Vec<&Trajectory> = match targets.get(cat) {
            None => pool.clone(),
            Some(&t) if t <= pool.len() => {
                let mut idx = index::sample(&mut rng, pool.len(), t).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| pool[i]).collect()
            }
            Some(&t) => {
                let mut perm: Vec<usize> = (0..pool.len()).collect();
                perm.shuffle(&mut rng);
                let extra = perm.iter().cycle().take(t - pool.len()).map(|&i| pool[i]);
                pool.iter().copied().chain(extra).collect()
            }
        };
        out.realized.insert(cat.to_string(), chosen.len());
        out.trajectories.extend(chosen.into_iter().cloned());
    }
    Ok(out)
}

// ---------------------------------------------------------------- SFT export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentRole {
    Prompt,
    ThoughtAction,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub text: String,
    /// Loss is computed on this segment.
    pub train: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub schema_version: u32,
    pub id: String,
    pub question_id: String,
    pub segments: Vec<Segment>,
}

impl SftExample {
    /// The rendered episode: all segment texts in order.
    pub fn text(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }

    pub fn trained_bytes(&self) -> usize {
        self.segments.iter().filter(|s| s.train).map(|s| s.text.len()).sum()
    }
}

/// Prompt, then per turn the policy output (trained) and its observation
/// (masked). Separators live in the masked segments.
pub fn export_sft(trajectory: &Trajectory, templates: &PromptTemplates) -> SftExample {
    let prompt = templates.build_prompt(&trajectory.question, &trajectory.topic_entities);
    let mut segments = vec![Segment {
        role: SegmentRole::Prompt,
        text: format!("{}\n\n{}\n", prompt.system_text, prompt.user_text),
        train: false,
    }];
    for turn in &trajectory.turns {
        segments.push(Segment {
            role: SegmentRole::ThoughtAction,
            text: turn.policy_text(),
            train: true,
        });
        if let Some(obs) = &turn.observation {
            segments.push(Segment {
                role: SegmentRole::Observation,
                text: format!("\n{}\n", wrap_observation(obs)),
                train: false,
            });
        }
    }
    SftExample {
        schema_version: SCHEMA_VERSION,
        id: trajectory.id.clone(),
        question_id: trajectory.question_id.clone(),
        segments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn em_rules() {
        assert!(em_hit(&["Brenda Song"], &["Brenda Song"]));
        assert!(!em_hit::<&str, &str>(&[], &["X"]));
        assert!(em_hit(&["A", "Z"], &["A", "B"]));
        assert!(!em_strict(&["A", "Z"], &["A", "B"]));
        assert!(em_strict(&["b", "A "], &["a", "B"]));
    }

    #[test]
    fn sub_seeds_differ_by_key() {
        assert_ne!(sub_seed(7, "balance", "c1"), sub_seed(7, "balance", "c2"));
        assert_eq!(sub_seed(7, "balance", "c1"), sub_seed(7, "balance", "c1"));
    }
}
