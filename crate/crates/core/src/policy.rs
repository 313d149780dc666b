//! Decision functions: a scripted replay policy for reproducible runs and an
//! OpenAI-compatible chat-completions client.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{read_jsonl, JsonlError, PromptBundle, Trajectory};

pub const DEFAULT_API_KEY_ENV: &str = "KBAGYM_API_KEY";
pub const DEFAULT_EXHAUSTED_OUTPUT: &str =
    "<think>\nThe replay script has no further outputs.\n</think>\n<answer> \\boxed{[]} </answer>";

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub output: String,
    pub logprobs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct PolicyError {
    pub message: String,
    pub retryable: bool,
}

impl PolicyError {
    pub fn retryable(message: impl Into<String>) -> Self {
        PolicyError {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        PolicyError {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Everything a policy may condition on.
#[derive(Debug, Clone, Copy)]
pub struct DecideContext<'a> {
    pub question_id: &'a str,
    pub episode: usize,
    /// Number of `decide` calls already made for this episode, retries included.
    pub call_index: usize,
    pub prompt: &'a PromptBundle,
    pub trajectory: &'a Trajectory,
}

pub trait Policy: Send + Sync {
    fn decide(&self, ctx: &DecideContext<'_>) -> Result<Decision, PolicyError>;
}

// ----------------------------------------------------------------- replay

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedOutput {
    Text(String),
    Error { error: String, retryable: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub question_id: String,
    /// Applies to every episode when absent.
    #[serde(default)]
    pub episode: Option<usize>,
    pub outputs: Vec<ScriptedOutput>,
}

/// Outputs keyed by question id (and optionally episode), indexed by call
/// number. Calls past the end yield `exhausted_output`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPolicy {
    scripts: HashMap<(String, Option<usize>), Vec<ScriptedOutput>>,
    exhausted_output: String,
}

impl ReplayPolicy {
    pub fn new(entries: Vec<ScriptEntry>, exhausted_output: impl Into<String>) -> Self {
        let scripts = entries
            .into_iter()
            .map(|e| ((e.question_id, e.episode), e.outputs))
            .collect();
        ReplayPolicy {
            scripts,
            exhausted_output: exhausted_output.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>, exhausted_output: impl Into<String>) -> Result<Self, JsonlError> {
        Ok(Self::new(read_jsonl(path)?, exhausted_output))
    }

    fn script(&self, qid: &str, episode: usize) -> Option<&Vec<ScriptedOutput>> {
        self.scripts
            .get(&(qid.to_string(), Some(episode)))
            .or_else(|| self.scripts.get(&(qid.to_string(), None)))
    }
}

impl Policy for ReplayPolicy {
    fn decide(&self, ctx: &DecideContext<'_>) -> Result<Decision, PolicyError> {
        let entry = self
            .script(ctx.question_id, ctx.episode)
            .and_then(|s| s.get(ctx.call_index));
        match entry {
            Some(ScriptedOutput::Text(t)) => Ok(Decision {
                output: t.clone(),
                logprobs: None,
            }),
            Some(ScriptedOutput::Error { error, retryable }) => Err(PolicyError {
                message: error.clone(),
                retryable: *retryable,
            }),
            None => Ok(Decision {
                output: self.exhausted_output.clone(),
                logprobs: None,
            }),
        }
    }
}

// ----------------------------------------------------------------- remote

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_request_timeout", with = "crate::util::duration_secs")]
    pub request_timeout: Duration,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub logprobs: bool,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> u32 {
    2048
}

fn default_request_timeout() -> Duration {
    Duration::from_secs(120)
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

impl RemoteConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_output_tokens: default_max_tokens(),
            request_timeout: default_request_timeout(),
            api_key_env: default_api_key_env(),
            logprobs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

pub fn wrap_observation(obs: &str) -> String {
    format!("<tool_response>\n{obs}\n</tool_response>")
}

/// System and user prompt, then one assistant message per turn followed by
/// its observation as a user message.
pub fn render_messages(prompt: &PromptBundle, trajectory: &Trajectory) -> Vec<ChatMessage> {
    let mut messages = vec![
        ChatMessage::new("system", prompt.system_text.clone()),
        ChatMessage::new("user", prompt.user_text.clone()),
    ];
    for turn in &trajectory.turns {
        messages.push(ChatMessage::new("assistant", turn.policy_text()));
        if let Some(obs) = &turn.observation {
            messages.push(ChatMessage::new("user", wrap_observation(obs)));
        }
    }
    messages
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    logprobs: bool,
}

pub fn render_chat_request(prompt: &PromptBundle, trajectory: &Trajectory, config: &RemoteConfig) -> Vec<u8> {
    let body = ChatRequest {
        model: &config.model_name,
        messages: render_messages(prompt, trajectory),
        temperature: config.temperature,
        max_tokens: config.max_output_tokens,
        logprobs: config.logprobs,
    };
    serde_json::to_vec(&body).expect("request serializes")
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

pub struct RemotePolicy {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemotePolicy {
    pub fn new(config: RemoteConfig) -> Result<Self, PolicyError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| PolicyError::fatal(format!("cannot build HTTP client: {e}")))?;
        let api_key = std::env::var(&config.api_key_env).ok();
        Ok(RemotePolicy {
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

fn status_is_retryable(status: reqwest::StatusCode) -> bool {
    status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS || status == reqwest::StatusCode::REQUEST_TIMEOUT
}

impl Policy for RemotePolicy {
    fn decide(&self, ctx: &DecideContext<'_>) -> Result<Decision, PolicyError> {
        let url = format!("{}/chat/completions", self.config.endpoint_url.trim_end_matches('/'));
        let body = render_chat_request(ctx.prompt, ctx.trajectory, &self.config);
        let mut req = self
            .client
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| PolicyError::retryable(format!("transport error: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let msg = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
            return Err(PolicyError {
                message: msg,
                retryable: status_is_retryable(status),
            });
        }
        let text = resp
            .text()
            .map_err(|e| PolicyError::retryable(format!("transport error: {e}")))?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| PolicyError::fatal(format!("malformed completion response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| PolicyError::fatal("completion response has no choices"))?;
        let output = choice.message.content.unwrap_or_default();
        let logprobs = choice
            .logprobs
            .and_then(|l| l.content)
            .map(|c| c.into_iter().map(|t| t.logprob).collect());
        Ok(Decision { output, logprobs })
    }
}

// ----------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyConfig {
    Replay {
        script: PathBuf,
        #[serde(default = "default_exhausted")]
        exhausted_output: String,
    },
    Remote(RemoteConfig),
}

fn default_exhausted() -> String {
    DEFAULT_EXHAUSTED_OUTPUT.to_string()
}

#[derive(Debug, Error)]
pub enum PolicyBuildError {
    #[error("cannot load replay script: {0}")]
    Script(#[from] JsonlError),
    #[error("{0}")]
    Remote(#[from] PolicyError),
    #[error("invalid policy config: {0}")]
    Invalid(String),
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            PolicyConfig::Replay { .. } => Ok(()),
            PolicyConfig::Remote(r) => {
                if r.endpoint_url.trim().is_empty() {
                    return Err("remote policy requires endpoint_url".into());
                }
                if r.model_name.trim().is_empty() {
                    return Err("remote policy requires model_name".into());
                }
                if !(r.temperature >= 0.0) {
                    return Err("temperature must be non-negative".into());
                }
                if r.max_output_tokens == 0 {
                    return Err("max_output_tokens must be positive".into());
                }
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<Box<dyn Policy>, PolicyBuildError> {
        self.validate().map_err(PolicyBuildError::Invalid)?;
        Ok(match self {
            PolicyConfig::Replay {
                script,
                exhausted_output,
            } => Box::new(ReplayPolicy::load(script, exhausted_output.clone())?),
            PolicyConfig::Remote(r) => Box::new(RemotePolicy::new(r.clone())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{PromptTemplates, Step, Termination, Turn};

    fn empty_trajectory() -> Trajectory {
        Trajectory {
            id: "q#0".into(),
            question_id: "q".into(),
            episode: 0,
            question: "q?".into(),
            topic_entities: vec![],
            turns: vec![],
            final_answers: None,
            terminated_by: Termination::MaxSteps,
        }
    }

    #[test]
    fn replay_lookup() {
        let policy = ReplayPolicy::new(
            vec![
                ScriptEntry {
                    question_id: "q".into(),
                    episode: None,
                    outputs: vec![ScriptedOutput::Text("a".into()), ScriptedOutput::Text("b".into())],
                },
                ScriptEntry {
                    question_id: "q".into(),
                    episode: Some(1),
                    outputs: vec![ScriptedOutput::Error {
                        error: "boom".into(),
                        retryable: false,
                    }],
                },
            ],
            "END",
        );
        let prompt = PromptTemplates::default().build_prompt("q?", &[]);
        let traj = empty_trajectory();
        let ctx = |episode, call_index| DecideContext {
            question_id: "q",
            episode,
            call_index,
            prompt: &prompt,
            trajectory: &traj,
        };
        assert_eq!(policy.decide(&ctx(0, 0)).unwrap().output, "a");
        assert_eq!(policy.decide(&ctx(0, 1)).unwrap().output, "b");
        assert_eq!(policy.decide(&ctx(0, 2)).unwrap().output, "END");
        assert!(!policy.decide(&ctx(1, 0)).unwrap_err().retryable);
        let other = DecideContext {
            question_id: "nope",
            ..ctx(0, 0)
        };
        assert_eq!(policy.decide(&other).unwrap().output, "END");
    }

    #[test]
    fn script_entry_json() {
        let e: ScriptEntry = serde_json::from_str(
            r#"{"question_id":"q","outputs":["x",{"error":"down","retryable":true}]}"#,
        )
        .unwrap();
        assert_eq!(e.outputs[1], ScriptedOutput::Error { error: "down".into(), retryable: true });
    }

    #[test]
    fn message_count_is_two_plus_two_per_turn() {
        let prompt = PromptTemplates::default().build_prompt("q?", &[]);
        let mut traj = empty_trajectory();
        let cfg = RemoteConfig::new("http://localhost", "m");
        let count = |t: &Trajectory| {
            let v: serde_json::Value = serde_json::from_slice(&render_chat_request(&prompt, t, &cfg)).unwrap();
            v["messages"].as_array().unwrap().len()
        };
        assert_eq!(count(&traj), 2);
        for _ in 0..2 {
            traj.turns.push(Turn {
                thought: "t".into(),
                step: Step::InvalidAction(crate::protocol::ParseFailure {
                    code: crate::protocol::ParseFailureCode::NoAction,
                    message: "m".into(),
                }),
                observation: Some("obs".into()),
                raw: Some("<think>t</think>".into()),
                logprobs: None,
            });
        }
        assert_eq!(count(&traj), 6);
    }

    #[test]
    fn policy_config_json() {
        let c: PolicyConfig = serde_json::from_str(
            r#"{"kind":"remote","endpoint_url":"http://h/v1","model_name":"m","request_timeout":5}"#,
        )
        .unwrap();
        let PolicyConfig::Remote(r) = &c else { panic!() };
        assert_eq!(r.temperature, 1.0);
        assert_eq!(r.request_timeout, Duration::from_secs(5));
        let bad = PolicyConfig::Remote(RemoteConfig::new("", "m"));
        assert!(bad.validate().is_err());
    }
}
