//! Trajectory data model, prompt assembly and parsing of raw policy output
//! into thoughts, tool calls and boxed answers.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::tools::ToolName;

// ------------------------------------------------------------------ model

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub tool: ToolName,
    pub arguments: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailureCode {
    MissingThink,
    NoAction,
    MalformedToolCall,
    UnknownTool,
    MissingArgument,
    MissingBox,
}

impl ParseFailureCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseFailureCode::MissingThink => "missing-think",
            ParseFailureCode::NoAction => "no-action",
            ParseFailureCode::MalformedToolCall => "malformed-tool-call",
            ParseFailureCode::UnknownTool => "unknown-tool",
            ParseFailureCode::MissingArgument => "missing-argument",
            ParseFailureCode::MissingBox => "missing-box",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{message}")]
pub struct ParseFailure {
    pub code: ParseFailureCode,
    pub message: String,
}

impl ParseFailure {
    fn new(code: ParseFailureCode, message: impl Into<String>) -> Self {
        ParseFailure {
            code,
            message: message.into(),
        }
    }

    /// Observation fed back to the policy.
    pub fn observation(&self) -> String {
        format!(
            "Invalid response format: {}. Please follow the required output format.",
            self.message
        )
    }
}

/// What a turn did. Serialized as exactly one of `action`, `final_answer`
/// or `invalid_action`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Action(Action),
    FinalAnswer(Vec<String>),
    InvalidAction(ParseFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub thought: String,
    #[serde(flatten)]
    pub step: Step,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    /// Verbatim policy output, when it came from a policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
}

impl Turn {
    /// Text of the assistant message for this turn: the raw output when
    /// recorded, else a canonical rendering that parses back to this turn.
    pub fn policy_text(&self) -> String {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        let think = format!("<think>\n{}\n</think>\n", self.thought);
        match &self.step {
            Step::Action(a) => {
                let call = serde_json::json!({"name": a.tool.as_str(), "arguments": a.arguments});
                format!("{think}<tool_call>\n{call}\n</tool_call>")
            }
            Step::FinalAnswer(answers) => {
                format!("{think}<answer> the answer is {} </answer>", render_boxed(answers))
            }
            Step::InvalidAction(_) => think,
        }
    }
}

/// `\boxed{["a", "b"]}`.
pub fn render_boxed(answers: &[String]) -> String {
    let items: Vec<String> = answers.iter().map(|a| crate::sparql::quote(a)).collect();
    format!("\\boxed{{[{}]}}", items.join(", "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicEntity {
    pub mention: String,
    pub iri: String,
}

impl<'de> Deserialize<'de> for TopicEntity {
    /// Accepts `{"mention": .., "iri": ..}` or a `[mention, iri]` pair.
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Object { mention: String, iri: String },
            Pair(String, String),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Object { mention, iri } | Repr::Pair(mention, iri) => TopicEntity { mention, iri },
        })
    }
}

/// One dataset question with its gold answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub topic_entities: Vec<TopicEntity>,
    #[serde(default, alias = "answers")]
    pub golden_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
}

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answer,
    MaxSteps,
    PolicyFailure,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Answer => "answer",
            Termination::MaxSteps => "max_steps",
            Termination::PolicyFailure => "policy_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `<question_id>#<episode>`.
    pub id: String,
    pub question_id: String,
    #[serde(default)]
    pub episode: usize,
    pub question: String,
    pub topic_entities: Vec<TopicEntity>,
    pub turns: Vec<Turn>,
    pub final_answers: Option<Vec<String>>,
    pub terminated_by: Termination,
}

impl Trajectory {
    pub fn trajectory_id(question_id: &str, episode: usize) -> String {
        format!("{question_id}#{episode}")
    }

    /// Number of turns that carried a tool call.
    pub fn tool_calls(&self) -> impl Iterator<Item = (usize, &Action)> {
        self.turns.iter().enumerate().filter_map(|(i, t)| match &t.step {
            Step::Action(a) => Some((i, a)),
            _ => None,
        })
    }

    pub fn invalid_calls(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| matches!(t.step, Step::InvalidAction(_)))
            .count()
    }

    pub fn observations(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().filter_map(|t| t.observation.as_deref())
    }

    /// Checks the structural invariants against a step cap.
    pub fn validate(&self, max_steps: usize) -> Result<(), String> {
        if self.turns.len() > max_steps {
            return Err(format!("{} turns exceed the cap of {max_steps}", self.turns.len()));
        }
        if self.final_answers.is_some() != (self.terminated_by == Termination::Answer) {
            return Err("final_answers must be present iff terminated_by is answer".into());
        }
        for (i, t) in self.turns.iter().enumerate() {
            let is_final = matches!(t.step, Step::FinalAnswer(_));
            if is_final && t.observation.is_some() {
                return Err(format!("final-answer turn {i} carries an observation"));
            }
            if !is_final && t.observation.is_none() {
                return Err(format!("turn {i} has no observation"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let text = std::fs::read_to_string(path)?;
    parse_jsonl(&text)
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| JsonlError::Json { line: i + 1, source }))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------- prompts

pub const DEFAULT_SYSTEM_PROMPT: &str = r#"#Tools

You are an expert in knowledge base query language SPARQL programming. The user gives a question, and you need to iteratively call the tool to continuously improve the SPARQL query until it can get the answer to the question.

You are provided with function signatures within <tools></tools> XML tags:
<tools>
{'type': 'function', 'function': {'name': 'SearchGraphPatterns', 'description': 'This tool searches for relevant one-hop and two-hop subgraphs tied to a specified variable. It queries subgraphs where the chosen variable (?x, assuming the SPARQL query begins with "SELECT DISTINCT ?x WHERE") appears as the head or tail entity and returns them collectively. The semantic parameter indicates the expected predicate semantics. When provided, the tool ranks the subgraphs based on these semantics. If unspecified, it returns the complete subgraph.', 'parameters': {'type': 'object', 'properties': {'sparql': {'type': 'string', 'description': 'SPARQL query'}, 'semantic': {'type': 'string', 'description': 'The semantic parameter represents the expected predicate semantics.'}}, 'required': ['sparql']}}}

{'type': 'function', 'function': {'name': 'ExecuteSPARQL', 'description': 'This tool executes a SPARQL query and returns the results.', 'parameters': {'type': 'object', 'properties': {'sparql': {'type': 'string', 'description': 'SPARQL query'}}, 'required': ['sparql']}}}

{'type': 'function', 'function': {'name': 'SearchTypes', 'description': 'Search the knowledge base for matching semantic types, used to initiate queries from a type when no topic entities are available, or to find a type to refine the query when multiple entities are returned. When use the type, please give the sparql as: SELECT DISTINCT ?x WHERE { ?x ns:type.object.type ns:<type_name> }', 'parameters': {'type': 'object', 'properties': {'query': {'type': 'string', 'description': 'the semantic of type to search for'}}, 'required': ['query']}}}
</tools>

For each function call, return a json object with function name and arguments within <tool_call></tool_call> XML tags:
<tool_call>
{"name": <function-name>, "arguments": <args-json-object>}
</tool_call>"#;

pub const DEFAULT_USER_TEMPLATE: &str = r#"When you encounter a complex question, you should break it down into several sub-questions and answer them step by step. You can use the tools provided. You can use the tool as many times as you want.
You must first conduct reasoning inside <think>...</think>. If you need to use the tool, you can use the tool call <tool_call>...</tool_call> to call the tool after <think>...</think>.
When you have the final answer, you can output the answer in the python list format inside <answer> tag, such as: <answer> the answer is \boxed{{[...]}} </answer>.

Output format for tool call:
<think>
...
</think>
<tool_call>
...
</tool_call>

Output format for answer:
<think>
...
</think>
<answer>
...
</answer>

Question: {question}
Topic Entities: {topic entities}
Assistant:"#;

const PLACEHOLDERS: [&str; 2] = ["question", "topic entities"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("user template must contain {{{0}}} exactly once, found {1}")]
    PlaceholderCount(String, usize),
    #[error("user template has unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("user template has an unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
}

enum Piece<'a> {
    Text(&'a str),
    Field(&'a str),
}

/// Splits a format-style template: `{{` and `}}` are literal braces and
/// `{name}` is a field.
fn pieces(template: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let mut out = Vec::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    let mut text_start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&template[text_start..i + 1]));
                i += 2;
                text_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&template[text_start..i + 1]));
                i += 2;
                text_start = i;
            }
            b'{' => {
                let close = template[i + 1..]
                    .find(['}', '{'])
                    .map(|off| i + 1 + off)
                    .filter(|&c| bytes[c] == b'}')
                    .ok_or(TemplateError::UnbalancedBrace(i))?;
                out.push(Piece::Text(&template[text_start..i]));
                out.push(Piece::Field(&template[i + 1..close]));
                i = close + 1;
                text_start = i;
            }
            b'}' => return Err(TemplateError::UnbalancedBrace(i)),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&template[text_start..]));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    /// Sent verbatim.
    pub system: String,
    /// Format-style template with `{question}` and `{topic entities}`.
    pub user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: DEFAULT_SYSTEM_PROMPT.to_string(),
            user: DEFAULT_USER_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn new(system: String, user: String) -> Result<Self, TemplateError> {
        let t = PromptTemplates { system, user };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let pieces = pieces(&self.user)?;
        for p in &pieces {
            if let Piece::Field(name) = p {
                if !PLACEHOLDERS.contains(name) {
                    return Err(TemplateError::UnknownPlaceholder(name.to_string()));
                }
            }
        }
        for name in PLACEHOLDERS {
            let n = pieces
                .iter()
                .filter(|p| matches!(p, Piece::Field(f) if *f == name))
                .count();
            if n != 1 {
                return Err(TemplateError::PlaceholderCount(name.to_string(), n));
            }
        }
        Ok(())
    }

    pub fn build_prompt(&self, question: &str, topic_entities: &[TopicEntity]) -> PromptBundle {
        let entities = render_topic_entities(topic_entities);
        let mut user = String::with_capacity(self.user.len() + question.len() + entities.len());
        for p in pieces(&self.user).expect("templates are validated on construction") {
            match p {
                Piece::Text(t) => user.push_str(t),
                Piece::Field("question") => user.push_str(question),
                Piece::Field(_) => user.push_str(&entities),
            }
        }
        PromptBundle {
            system_text: self.system.clone(),
            user_text: user,
        }
    }
}

pub fn render_topic_entities(entities: &[TopicEntity]) -> String {
    entities
        .iter()
        .map(|e| format!("{} ({})", e.mention, e.iri))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelOutput {
    Action { thought: String, action: Action },
    FinalAnswer { thought: String, answers: Vec<String> },
    Failure { thought: String, failure: ParseFailure },
}

/// Content of the first `<tag>...</tag>` at or after `from`, plus the byte
/// offset of the opening tag and the end of the block. An unclosed block
/// runs to the end of the text when `lenient`.
fn block<'a>(text: &'a str, tag: &str, from: usize, lenient: bool) -> Option<(usize, &'a str, usize)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = from + text[from..].find(&open)?;
    let body = start + open.len();
    match text[body..].find(&close) {
        Some(off) => Some((start, &text[body..body + off], body + off + close.len())),
        None if lenient => Some((start, &text[body..], text.len())),
        None => None,
    }
}

fn argument_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_tool_call(body: &str) -> Result<Action, ParseFailure> {
    use ParseFailureCode::*;
    let value: serde_json::Value = serde_json::from_str(body.trim())
        .map_err(|e| ParseFailure::new(MalformedToolCall, format!("tool call is not valid JSON ({e})")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseFailure::new(MalformedToolCall, "tool call must be a JSON object"))?;
    let name = obj
        .get("name")
        .and_then(|n| n.as_str())
        .ok_or_else(|| ParseFailure::new(MalformedToolCall, "tool call lacks a string \"name\""))?;
    let tool: ToolName = name.parse().map_err(|_| {
        ParseFailure::new(
            UnknownTool,
            format!("unknown tool {name:?}; available tools are SearchTypes, SearchGraphPatterns, ExecuteSPARQL"),
        )
    })?;
    let args_value = match obj.get("arguments") {
        None | Some(serde_json::Value::Null) => serde_json::Value::Object(Default::default()),
        Some(serde_json::Value::String(s)) => serde_json::from_str(s).map_err(|e| {
            ParseFailure::new(MalformedToolCall, format!("tool call arguments are not valid JSON ({e})"))
        })?,
        Some(v) => v.clone(),
    };
    let args = args_value
        .as_object()
        .ok_or_else(|| ParseFailure::new(MalformedToolCall, "tool call arguments must be a JSON object"))?;
    let arguments: BTreeMap<String, String> = args
        .iter()
        .filter(|(_, v)| !v.is_null())
        .map(|(k, v)| (k.clone(), argument_string(v)))
        .collect();
    if !arguments.contains_key(tool.required_argument()) {
        return Err(ParseFailure::new(
            MissingArgument,
            format!("{tool} requires the argument {:?}", tool.required_argument()),
        ));
    }
    Ok(Action { tool, arguments })
}

/// Parses one raw policy output. Never panics.
pub fn parse_model_output(text: &str) -> ModelOutput {
    use ParseFailureCode::*;
    let Some((_, thought, after_think)) = block(text, "think", 0, false) else {
        return ModelOutput::Failure {
            thought: String::new(),
            failure: ParseFailure::new(MissingThink, "missing <think>...</think> block"),
        };
    };
    let thought = thought.trim().to_string();
    let call = block(text, "tool_call", after_think, true);
    let answer = block(text, "answer", after_think, true);
    let use_call = match (&call, &answer) {
        (Some((c, ..)), Some((a, ..))) => c < a,
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => {
            return ModelOutput::Failure {
                thought,
                failure: ParseFailure::new(
                    NoAction,
                    "expected a <tool_call>...</tool_call> or <answer>...</answer> block after </think>",
                ),
            }
        }
    };
    if use_call {
        let (_, body, _) = call.expect("checked");
        match parse_tool_call(body) {
            Ok(action) => ModelOutput::Action { thought, action },
            Err(failure) => ModelOutput::Failure { thought, failure },
        }
    } else {
        let (_, body, _) = answer.expect("checked");
        let boxed = extract_boxed_answers(body);
        if boxed.box_found {
            ModelOutput::FinalAnswer {
                thought,
                answers: boxed.answers,
            }
        } else {
            ModelOutput::Failure {
                thought,
                failure: ParseFailure::new(MissingBox, "the answer must be wrapped in \\boxed{[...]}"),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoxedAnswers {
    pub answers: Vec<String>,
    pub box_found: bool,
}

fn is_quote(c: char) -> bool {
    c == '"' || c == '\''
}

/// Brace-matched interior of the first `\boxed{...}`. Braces inside quoted
/// strings do not count; a quote only opens at the start of a list item.
fn boxed_interior(text: &str) -> Option<&str> {
    let start = text.find("\\boxed{")? + "\\boxed{".len();
    let mut depth = 1usize;
    let mut quote: Option<char> = None;
    let mut prev_sig = '{';
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i]);
                }
            }
            c if is_quote(c) && matches!(prev_sig, '[' | ',' | '{') => quote = Some(c),
            _ => {}
        }
        if !c.is_whitespace() {
            prev_sig = c;
        }
    }
    None
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Splits a list body into items. Quoted items may contain commas.
fn list_items(body: &str) -> Vec<String> {
    let mut items = Vec::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= chars.len() {
            break;
        }
        if is_quote(chars[i]) {
            let q = chars[i];
            let mut j = i + 1;
            let mut raw = String::new();
            let mut closed = false;
            while j < chars.len() {
                match chars[j] {
                    '\\' if j + 1 < chars.len() => {
                        raw.push('\\');
                        raw.push(chars[j + 1]);
                        j += 2;
                        continue;
                    }
                    c if c == q => {
                        closed = true;
                        break;
                    }
                    c => raw.push(c),
                }
                j += 1;
            }
            if closed {
                items.push(unescape(&raw));
                // skip to the next separator
                while j < chars.len() && chars[j] != ',' {
                    j += 1;
                }
                i = j + 1;
                continue;
            }
        }
        let mut j = i;
        while j < chars.len() && chars[j] != ',' {
            j += 1;
        }
        items.push(chars[i..j].iter().collect());
        i = j + 1;
    }
    items
}

/// Answers in the first `\boxed{...}`: a bracketed list of quoted strings or
/// bare tokens, or a bare comma-separated list. Trimmed, non-empty and
/// de-duplicated in first-seen order.
pub fn extract_boxed_answers(text: &str) -> BoxedAnswers {
    let Some(interior) = boxed_interior(text) else {
        return BoxedAnswers::default();
    };
    let trimmed = interior.trim();
    let body = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(trimmed);
    let mut seen = HashSet::new();
    let answers = list_items(body)
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(s.clone()))
        .collect();
    BoxedAnswers {
        answers,
        box_found: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entities() -> Vec<TopicEntity> {
        vec![
            TopicEntity {
                mention: "London Tipton".into(),
                iri: "m.07g8r3".into(),
            },
            TopicEntity {
                mention: "The Suite Life on Deck".into(),
                iri: "m.03mj4jm".into(),
            },
        ]
    }

    #[test]
    fn default_prompt_renders() {
        let t = PromptTemplates::default();
        t.validate().unwrap();
        let p = t.build_prompt("who plays london tipton in suite life on deck?", &entities());
        assert!(p.user_text.contains("Question: who plays london tipton in suite life on deck?\n"));
        assert!(p
            .user_text
            .contains("Topic Entities: London Tipton (m.07g8r3), The Suite Life on Deck (m.03mj4jm)\n"));
        assert!(p.user_text.contains("<answer> the answer is \\boxed{[...]} </answer>"));
        assert!(p.user_text.ends_with("Assistant:"));
        assert!(p.system_text.starts_with("#Tools\n\nYou are an expert in knowledge base query language SPARQL programming."));
        let empty = t.build_prompt("q", &[]);
        assert!(empty.user_text.contains("Topic Entities: \n"));
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplates::new("s".into(), "Topic: {topic entities}".into()),
            Err(TemplateError::PlaceholderCount(name, 0)) if name == "question"
        ));
        assert!(matches!(
            PromptTemplates::new("s".into(), "{question} {question} {topic entities}".into()),
            Err(TemplateError::PlaceholderCount(_, 2))
        ));
        assert!(matches!(
            PromptTemplates::new("s".into(), "{question} {topic entities} {other}".into()),
            Err(TemplateError::UnknownPlaceholder(_))
        ));
        assert!(PromptTemplates::new("s".into(), "{question} {topic entities} }".into()).is_err());
        let ok = PromptTemplates::new("s".into(), "{{x}} {question}|{topic entities}".into()).unwrap();
        assert_eq!(ok.build_prompt("q", &entities()[..1]).user_text, "{x} q|London Tipton (m.07g8r3)");
    }

    #[test]
    fn parses_tool_call() {
        let out = parse_model_output(
            "<think>x</think><tool_call>{\"name\":\"ExecuteSPARQL\",\"arguments\":{\"sparql\":\"SELECT ...\"}}</tool_call>",
        );
        let ModelOutput::Action { thought, action } = out else { panic!("{out:?}") };
        assert_eq!(thought, "x");
        assert_eq!(action.tool, ToolName::ExecuteSparql);
        assert_eq!(action.arguments["sparql"], "SELECT ...");
    }

    #[test]
    fn arguments_may_be_a_json_string() {
        let out = parse_model_output(
            "<think>t</think>\n<tool_call>\n{\"name\": \"SearchTypes\", \"arguments\": \"{\\\"query\\\": \\\"College\\\"}\"}\n</tool_call>",
        );
        assert!(matches!(out, ModelOutput::Action { ref action, .. } if action.arguments["query"] == "College"));
    }

    #[test]
    fn parses_answer() {
        let out = parse_model_output("<think>done</think><answer> the answer is \\boxed{[\"Brenda Song\"]} </answer>");
        assert_eq!(
            out,
            ModelOutput::FinalAnswer {
                thought: "done".into(),
                answers: vec!["Brenda Song".into()]
            }
        );
    }

    #[test]
    fn failure_codes() {
        let code = |s: &str| match parse_model_output(s) {
            ModelOutput::Failure { failure, .. } => Some(failure.code),
            _ => None,
        };
        use ParseFailureCode::*;
        assert_eq!(code("no think"), Some(MissingThink));
        assert_eq!(code("<think>a</think> nothing"), Some(NoAction));
        assert_eq!(code("<think>a</think><tool_call>{oops</tool_call>"), Some(MalformedToolCall));
        assert_eq!(
            code("<think>a</think><tool_call>{\"name\":\"Frobnicate\",\"arguments\":{}}</tool_call>"),
            Some(UnknownTool)
        );
        assert_eq!(
            code("<think>a</think><tool_call>{\"name\":\"SearchTypes\",\"arguments\":{}}</tool_call>"),
            Some(MissingArgument)
        );
        assert_eq!(code("<think>a</think><answer>[\"x\"]</answer>"), Some(MissingBox));
    }

    #[test]
    fn first_block_wins() {
        let out = parse_model_output(
            "<think>a</think><answer>\\boxed{[\"A\"]}</answer><tool_call>{\"name\":\"SearchTypes\",\"arguments\":{\"query\":\"q\"}}</tool_call>",
        );
        assert!(matches!(out, ModelOutput::FinalAnswer { .. }));
        let out = parse_model_output(
            "<think>a</think><tool_call>{\"name\":\"SearchTypes\",\"arguments\":{\"query\":\"1\"}}</tool_call><tool_call>{\"name\":\"SearchTypes\",\"arguments\":{\"query\":\"2\"}}</tool_call>",
        );
        assert!(matches!(out, ModelOutput::Action { ref action, .. } if action.arguments["query"] == "1"));
    }

    #[test]
    fn boxed_extraction() {
        let b = extract_boxed_answers("\\boxed{[\"McGill University Faculty of Medicine\"]}");
        assert_eq!(b.answers, ["McGill University Faculty of Medicine"]);
        let b = extract_boxed_answers("\\boxed{[]}");
        assert!(b.box_found && b.answers.is_empty());
        let b = extract_boxed_answers("nothing here");
        assert!(!b.box_found && b.answers.is_empty());
        assert_eq!(extract_boxed_answers("\\boxed{[\"A\",\"A\",\"B\"]}").answers, ["A", "B"]);
        assert_eq!(extract_boxed_answers("\\boxed{['x', ' y ', \"z, w\"]}").answers, ["x", "y", "z, w"]);
        assert_eq!(extract_boxed_answers("\\boxed{a, b ,a}").answers, ["a", "b"]);
        assert_eq!(extract_boxed_answers("\\boxed{[\"a}b{\", \"c\"]} tail").answers, ["a}b{", "c"]);
        assert_eq!(extract_boxed_answers("\\boxed{[O'Brien, \"Kids' Choice\"]}").answers, ["O'Brien", "Kids' Choice"]);
        assert_eq!(extract_boxed_answers("\\boxed{[1990]}").answers, ["1990"]);
        assert!(!extract_boxed_answers("\\boxed{[\"unclosed\"]").box_found);
    }

    #[test]
    fn turn_json_shape() {
        let turn = Turn {
            thought: "t".into(),
            step: Step::FinalAnswer(vec!["A".into()]),
            observation: None,
            raw: None,
            logprobs: None,
        };
        let v = serde_json::to_value(&turn).unwrap();
        assert_eq!(v, serde_json::json!({"thought": "t", "final_answer": ["A"]}));
        let back: Turn = serde_json::from_value(v).unwrap();
        assert_eq!(back, turn);
        let pair: TopicEntity = serde_json::from_str("[\"London Tipton\", \"m.07g8r3\"]").unwrap();
        assert_eq!(pair.iri, "m.07g8r3");
    }
}
