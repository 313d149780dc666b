//! SPARQL-subset parsing, sandboxed evaluation and result rendering.
//!
//! Error `Display` strings are part of the agent protocol: they are fed back
//! to the policy verbatim as observations.

mod ast;
mod eval;
mod parser;
pub mod value;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::*;
pub use eval::{evaluate, evaluate_from};
pub use parser::parse_query;

use crate::kb::{KnowledgeBase, Term};

pub const TIMEOUT_PREFIX: &str = "SPARQL timeout after ";
pub const PARSE_ERROR_PREFIX: &str = "SPARQL parse error";
pub const EVAL_ERROR_PREFIX: &str = "SPARQL evaluation error";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparqlError {
    #[error("SPARQL parse error at line {line}, col {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    /// The rendered duration is the configured limit so that observations
    /// stay byte-stable; `elapsed` carries the measured time.
    #[error("SPARQL timeout after {}s", limit.as_secs_f64())]
    Timeout { limit: Duration, elapsed: Duration },
    #[error("SPARQL evaluation error: {0}")]
    Resource(String),
    #[error("SPARQL evaluation error: {0}")]
    Contract(String),
}

impl SparqlError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, SparqlError::Timeout { .. })
    }
}

/// Sandbox guards applied to every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalLimits {
    #[serde(rename = "timeout_secs", with = "crate::util::duration_secs")]
    pub timeout: Duration,
    pub max_rows: usize,
    pub max_intermediate_bindings: usize,
}

impl Default for EvalLimits {
    fn default() -> Self {
        EvalLimits {
            timeout: Duration::from_secs(300),
            max_rows: 1000,
            max_intermediate_bindings: 100_000,
        }
    }
}

impl EvalLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if self.max_rows == 0 {
            return Err("max_rows must be positive".into());
        }
        if self.max_intermediate_bindings == 0 {
            return Err("max_intermediate_bindings must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    /// One term per column, aligned with `columns`.
    pub rows: Vec<Vec<Term>>,
    /// Rows were dropped by LIMIT or `max_rows`.
    pub truncated: bool,
}

impl ResultSet {
    pub fn column(&self, name: &str) -> Option<Vec<&Term>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[idx]).collect())
    }
}

/// Parses and evaluates in one step.
pub fn run_query(
    text: &str,
    kb: &KnowledgeBase,
    limits: &EvalLimits,
) -> Result<ResultSet, SparqlError> {
    let ast = parse_query(text)?;
    evaluate(&ast, kb, limits)
}

/// Double-quotes `s`, escaping backslashes, quotes and newlines.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Observation text for a result set: `["a", "b"]` for one column,
/// `[("a", "b"), ...]` for several; at most `max_items` entries followed by
/// `, ...` when more rows exist.
pub fn render_results(rs: &ResultSet, kb: &KnowledgeBase, max_items: usize) -> String {
    if rs.rows.is_empty() {
        return "[]".to_string();
    }
    let render_row = |row: &Vec<Term>| -> String {
        let cells: Vec<String> = row.iter().map(|t| quote(&kb.display(t))).collect();
        if cells.len() == 1 {
            cells.into_iter().next().expect("one cell")
        } else {
            format!("({})", cells.join(", "))
        }
    };
    let shown: Vec<String> = rs.rows.iter().take(max_items).map(render_row).collect();
    let mut out = format!("[{}", shown.join(", "));
    if rs.rows.len() > max_items {
        out.push_str(", ...");
    }
    out.push(']');
    out
}
