//! Episode execution: decide, parse, dispatch, observe, repeat until an
//! answer, the step cap, or a policy failure. Groups and datasets run on a
//! bounded thread pool with output ordered by episode index.

use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::KnowledgeBase;
use crate::policy::{DecideContext, Policy, PolicyError};
use crate::protocol::{
    parse_model_output, ModelOutput, PromptTemplates, QuestionRecord, Step, Termination, Trajectory,
    Turn,
};
use crate::tools::{run_tool, ToolConfig};

pub const TRUNCATION_MARKER: &str = "[truncated]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Step cap T.
    pub max_steps: usize,
    pub observation_char_cap: usize,
    /// Episodes per question (N).
    pub group_size: usize,
    /// Per-output character cap; longer outputs are cut before parsing.
    pub max_response_chars: Option<usize>,
    /// Cap on the summed characters of all policy outputs in one episode.
    pub max_episode_chars: Option<usize>,
    pub max_retries: usize,
    #[serde(with = "crate::util::duration_secs")]
    pub retry_backoff: Duration,
    pub parallelism: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            max_steps: 10,
            observation_char_cap: 2000,
            group_size: 8,
            max_response_chars: None,
            max_episode_chars: None,
            max_retries: 2,
            retry_backoff: Duration::from_millis(500),
            parallelism: default_parallelism(),
        }
    }
}

/// Logical CPU count, or 1 when it cannot be determined.
pub fn default_parallelism() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        if self.observation_char_cap == 0 {
            return Err("observation_char_cap must be positive".into());
        }
        if self.group_size == 0 {
            return Err("group_size must be positive".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be positive".into());
        }
        Ok(())
    }
}

/// Keeps the first `cap` characters and appends the truncation marker.
pub fn cap_observation(obs: String, cap: usize) -> String {
    match obs.char_indices().nth(cap) {
        None => obs,
        Some((byte, _)) => format!("{} {TRUNCATION_MARKER}", &obs[..byte]),
    }
}

fn cap_chars(s: String, cap: Option<usize>) -> String {
    match cap.and_then(|c| s.char_indices().nth(c)) {
        None => s,
        Some((byte, _)) => s[..byte].to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    /// Message of the policy error that ended the episode.
    pub error: Option<String>,
}

/// Shared, read-only inputs of a rollout.
pub struct Environment<'a> {
    pub kb: &'a KnowledgeBase,
    pub policy: &'a dyn Policy,
    pub templates: &'a PromptTemplates,
    pub tools: &'a ToolConfig,
    pub config: &'a RolloutConfig,
}

impl Environment<'_> {
    fn decide_with_retries(
        &self,
        ctx: DecideContext<'_>,
        call_index: &mut usize,
    ) -> Result<crate::policy::Decision, PolicyError> {
        let mut attempt = 0;
        loop {
            let result = self.policy.decide(&DecideContext {
                call_index: *call_index,
                ..ctx
            });
            *call_index += 1;
            match result {
                Err(e) if e.retryable && attempt < self.config.max_retries => {
                    log::debug!("retrying after policy error: {e}");
                    let backoff = self.config.retry_backoff.saturating_mul(1 << attempt.min(16));
                    if !backoff.is_zero() {
                        thread::sleep(backoff);
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    pub fn run_episode(&self, question: &QuestionRecord, episode: usize) -> EpisodeOutcome {
        let prompt = self
            .templates
            .build_prompt(&question.question, &question.topic_entities);
        let mut trajectory = Trajectory {
            id: Trajectory::trajectory_id(&question.id, episode),
            question_id: question.id.clone(),
            episode,
            question: question.question.clone(),
            topic_entities: question.topic_entities.clone(),
            turns: Vec::new(),
            final_answers: None,
            terminated_by: Termination::MaxSteps,
        };
        let mut call_index = 0;
        let mut spent_chars = 0usize;
        for _ in 0..self.config.max_steps {
            let ctx = DecideContext {
                question_id: &question.id,
                episode,
                call_index,
                prompt: &prompt,
                trajectory: &trajectory,
            };
            let decision = match self.decide_with_retries(ctx, &mut call_index) {
                Ok(d) => d,
                Err(e) => {
                    trajectory.terminated_by = Termination::PolicyFailure;
                    return EpisodeOutcome {
                        trajectory,
                        error: Some(e.message),
                    };
                }
            };
            let raw = cap_chars(decision.output, self.config.max_response_chars);
            spent_chars += raw.chars().count();
            let turn = match parse_model_output(&raw) {
                ModelOutput::Action { thought, action } => {
                    let obs = run_tool(self.kb, action.tool, &action.arguments, self.tools);
                    Turn {
                        thought,
                        step: Step::Action(action),
                        observation: Some(cap_observation(obs, self.config.observation_char_cap)),
                        raw: Some(raw),
                        logprobs: decision.logprobs,
                    }
                }
                ModelOutput::FinalAnswer { thought, answers } => {
                    trajectory.final_answers = Some(answers.clone());
                    trajectory.terminated_by = Termination::Answer;
                    trajectory.turns.push(Turn {
                        thought,
                        step: Step::FinalAnswer(answers),
                        observation: None,
                        raw: Some(raw),
                        logprobs: decision.logprobs,
                    });
                    return EpisodeOutcome {
                        trajectory,
                        error: None,
                    };
                }
                ModelOutput::Failure { thought, failure } => Turn {
                    thought,
                    observation: Some(failure.observation()),
                    step: Step::InvalidAction(failure),
                    raw: Some(raw),
                    logprobs: decision.logprobs,
                },
            };
            trajectory.turns.push(turn);
            if self.config.max_episode_chars.is_some_and(|cap| spent_chars >= cap) {
                break;
            }
        }
        EpisodeOutcome {
            trajectory,
            error: None,
        }
    }

    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism.max(1))
            .build()
            .expect("thread pool")
    }

    /// `group_size` independent episodes for one question.
    pub fn run_group(&self, question: &QuestionRecord) -> Vec<EpisodeOutcome> {
        self.run_dataset(std::slice::from_ref(question))
    }

    /// Every (question, episode) pair, ordered by question then episode.
    pub fn run_dataset(&self, questions: &[QuestionRecord]) -> Vec<EpisodeOutcome> {
        let jobs: Vec<(&QuestionRecord, usize)> = questions
            .iter()
            .flat_map(|q| (0..self.config.group_size).map(move |e| (q, e)))
            .collect();
        self.pool().install(|| {
            jobs.par_iter()
                .map(|(q, e)| self.run_episode(q, *e))
                .collect()
        })
    }
}

// --------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub question_id: String,
    pub episode: usize,
    pub status: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub turns: usize,
    pub invalid_calls: usize,
    /// Summed characters of all policy outputs.
    #[serde(default)]
    pub response_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

impl EpisodeRecord {
    pub fn from_outcome(o: &EpisodeOutcome, reward: Option<f64>) -> Self {
        let t = &o.trajectory;
        EpisodeRecord {
            id: t.id.clone(),
            question_id: t.question_id.clone(),
            episode: t.episode,
            status: t.terminated_by,
            error: o.error.clone(),
            turns: t.turns.len(),
            invalid_calls: t.invalid_calls(),
            response_chars: t.turns.iter().map(|u| u.policy_text().chars().count()).sum(),
            reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub kb_fingerprint: String,
    #[serde(default)]
    pub dataset_fingerprint: String,
    /// Training step the rollout belongs to.
    #[serde(default)]
    pub global_step: u64,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub episodes: Vec<EpisodeRecord>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<(), ManifestError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
