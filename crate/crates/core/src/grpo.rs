//! Group-relative advantages, the clipped token-level surrogate and the KL
//! penalty, as pure functions over rewards and token log-probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrpoError {
    #[error("a group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("trajectory {index}: log-prob lists have mismatched lengths")]
    LengthMismatch { index: usize },
    #[error("{expected} advantages expected, got {got}")]
    AdvantageCount { expected: usize, got: usize },
    #[error("invalid GRPO config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N - 1.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlEstimator {
    Direct,
    #[default]
    K3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub clip_eps: f64,
    pub kl_coeff: f64,
    pub on_policy: bool,
    pub std_eps: f64,
    pub std_mode: StdMode,
    pub kl_estimator: KlEstimator,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            clip_eps: 0.2,
            kl_coeff: 0.001,
            on_policy: false,
            std_eps: 1e-6,
            std_mode: StdMode::Population,
            kl_estimator: KlEstimator::K3,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(GrpoError::Config("clip_eps must lie in (0, 1)".into()));
        }
        if !(self.std_eps > 0.0) {
            return Err(GrpoError::Config("std_eps must be positive".into()));
        }
        if !(self.kl_coeff >= 0.0) {
            return Err(GrpoError::Config("kl_coeff must be non-negative".into()));
        }
        Ok(())
    }
}

/// Aligned per-token log-probabilities for one trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub logp_new: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
}

impl TokenLogProbs {
    fn check(&self, index: usize) -> Result<(), GrpoError> {
        let n = self.logp_new.len();
        if self.logp_old.len() != n || self.logp_ref.len() != n {
            return Err(GrpoError::LengthMismatch { index });
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `(R_i - mean) / std`, zero for every member when std falls below `std_eps`.
pub fn group_advantages(rewards: &[f64], config: &GrpoConfig) -> Result<Vec<f64>, GrpoError> {
    let n = rewards.len();
    if n < 2 {
        return Err(GrpoError::GroupTooSmall(n));
    }
    let m = mean(rewards);
    let ss: f64 = rewards.iter().map(|r| (r - m) * (r - m)).sum();
    let denom = match config.std_mode {
        StdMode::Population => n as f64,
        StdMode::Sample => (n - 1) as f64,
    };
    let std = (ss / denom).sqrt();
    if std < config.std_eps {
        return Ok(vec![0.0; n]);
    }
    Ok(rewards.iter().map(|r| (r - m) / std).collect())
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term(rho: f64, advantage: f64, eps: f64) -> f64 {
    (rho * advantage).min(clip(rho, 1.0 - eps, 1.0 + eps) * advantage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOutput {
    pub per_trajectory: Vec<f64>,
    pub objective: f64,
}

/// Token-mean clipped surrogate per trajectory and its mean over the group.
/// Empty trajectories contribute zero.
pub fn token_surrogate(
    logps: &[TokenLogProbs],
    advantages: &[f64],
    config: &GrpoConfig,
) -> Result<SurrogateOutput, GrpoError> {
    if logps.len() != advantages.len() {
        return Err(GrpoError::AdvantageCount {
            expected: logps.len(),
            got: advantages.len(),
        });
    }
    let mut per_trajectory = Vec::with_capacity(logps.len());
    for (i, (lp, &a)) in logps.iter().zip(advantages).enumerate() {
        lp.check(i)?;
        if lp.logp_new.is_empty() {
            per_trajectory.push(0.0);
            continue;
        }
        let terms: Vec<f64> = lp
            .logp_new
            .iter()
            .zip(&lp.logp_old)
            .map(|(new, old)| {
                let rho = if config.on_policy { 1.0 } else { (new - old).exp() };
                clipped_term(rho, a, config.clip_eps)
            })
            .collect();
        per_trajectory.push(mean(&terms));
    }
    let objective = if per_trajectory.is_empty() { 0.0 } else { mean(&per_trajectory) };
    Ok(SurrogateOutput {
        per_trajectory,
        objective,
    })
}

/// KL estimate: token mean within each trajectory, then mean over
/// trajectories.
pub fn kl_penalty(logps: &[TokenLogProbs], config: &GrpoConfig) -> Result<f64, GrpoError> {
    let mut per_trajectory = Vec::with_capacity(logps.len());
    for (i, lp) in logps.iter().enumerate() {
        if lp.logp_new.len() != lp.logp_ref.len() {
            return Err(GrpoError::LengthMismatch { index: i });
        }
        if lp.logp_new.is_empty() {
            per_trajectory.push(0.0);
            continue;
        }
        let terms: Vec<f64> = lp
            .logp_new
            .iter()
            .zip(&lp.logp_ref)
            .map(|(new, r)| match config.kl_estimator {
                KlEstimator::Direct => new - r,
                KlEstimator::K3 => {
                    let d = r - new;
                    d.exp_m1() - d
                }
            })
            .collect();
        per_trajectory.push(mean(&terms));
    }
    Ok(if per_trajectory.is_empty() { 0.0 } else { mean(&per_trajectory) })
}

/// One group: its rewards and the matching log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub rewards: Vec<f64>,
    pub logprobs: Vec<TokenLogProbs>,
}

/// Mean over groups of `surrogate - kl_coeff * kl`.
pub fn grpo_objective(groups: &[Group], config: &GrpoConfig) -> Result<f64, GrpoError> {
    config.validate()?;
    let mut total = 0.0;
    for g in groups {
        let adv = group_advantages(&g.rewards, config)?;
        let s = token_surrogate(&g.logprobs, &adv, config)?;
        let kl = kl_penalty(&g.logprobs, config)?;
        total += s.objective - config.kl_coeff * kl;
    }
    Ok(if groups.is_empty() { 0.0 } else { total / groups.len() as f64 })
}
