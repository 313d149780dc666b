//! Knowledge-base question answering environment for tool-using agents.

pub mod config;
pub mod grpo;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod protocol;
pub mod reward;
pub mod rollout;
pub mod sparql;
pub mod tools;
pub mod util;
