//! Run configuration: one JSON document, layered over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grpo::GrpoConfig;
use crate::kb::{KbFormat, DEFAULT_LABEL_PREDICATE};
use crate::pipeline::MAX_PER_QUESTION;
use crate::policy::PolicyConfig;
use crate::protocol::PromptTemplates;
use crate::reward::RewardConfig;
use crate::rollout::RolloutConfig;
use crate::tools::ToolConfig;

pub const CONFIG_ENV: &str = "KBAGYM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kb_path: Option<PathBuf>,
    pub kb_format: KbFormat,
    pub label_predicate: String,
    pub dataset_path: Option<PathBuf>,
    pub policy: Option<PolicyConfig>,
    pub rollout: RolloutConfig,
    pub tools: ToolConfig,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub templates: PromptTemplates,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Per-category trajectory targets for balancing.
    pub category_targets: BTreeMap<String, usize>,
    pub max_per_question: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kb_path: None,
            kb_format: KbFormat::default(),
            label_predicate: DEFAULT_LABEL_PREDICATE.to_string(),
            dataset_path: None,
            policy: None,
            rollout: RolloutConfig::default(),
            tools: ToolConfig::default(),
            reward: RewardConfig::default(),
            grpo: GrpoConfig::default(),
            templates: PromptTemplates::default(),
            output_dir: None,
            seed: 0,
            category_targets: BTreeMap::new(),
            max_per_question: MAX_PER_QUESTION,
        }
    }
}

impl RunConfig {
    /// Reads a config file. A run manifest is accepted too; its `config`
    /// member is used.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|source| ConfigError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let is_manifest = value
            .as_object()
            .is_some_and(|o| o.contains_key("config") && o.contains_key("episodes"));
        if is_manifest {
            value = value["config"].take();
        }
        serde_json::from_value(value)
    }

    /// Explicit path, else `KBAGYM_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(PathBuf::from(p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (name, path) in [("kb_path", &self.kb_path), ("dataset_path", &self.dataset_path)] {
            if let Some(p) = path {
                if !p.exists() {
                    return invalid(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        if let Some(PolicyConfig::Replay { script, .. }) = &self.policy {
            if !script.exists() {
                return invalid(format!("replay script {} does not exist", script.display()));
            }
        }
        if let Some(p) = &self.policy {
            p.validate().map_err(ConfigError::Invalid)?;
        }
        self.rollout.validate().map_err(ConfigError::Invalid)?;
        self.tools.limits.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.reward.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grpo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.templates.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.max_per_question == 0 {
            return invalid("max_per_question must be positive".into());
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
