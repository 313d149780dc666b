//! Immutable in-memory triple store.
//!
//! Terms are interned into dense ids in first-seen order. Three permutation
//! indexes (SPO, POS, OSP) answer any triple pattern with a range scan, and
//! every lookup returns triples sorted by `(s, p, o)` id order so that tool
//! observations are reproducible.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_LABEL_PREDICATE: &str = "type.object.name";
pub const DEFAULT_TYPE_PREDICATE: &str = "type.object.type";

const XSD_NAMESPACE: &str = "http://www.w3.org/2001/XMLSchema#";

/// An IRI or a literal with an optional datatype.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Iri {
        value: String,
    },
    Literal {
        value: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
    },
}

impl Term {
    /// Builds an IRI term, rejecting empty values and whitespace.
    pub fn iri(value: impl Into<String>) -> Result<Self, TermError> {
        let value = value.into();
        if value.is_empty() {
            return Err(TermError::EmptyIri);
        }
        if value.chars().any(char::is_whitespace) {
            return Err(TermError::WhitespaceInIri(value));
        }
        Ok(Term::Iri { value })
    }

    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: None,
        }
    }

    pub fn typed_literal(value: impl Into<String>, datatype: impl Into<String>) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: Some(normalize_datatype(&datatype.into())),
        }
    }

    pub fn value(&self) -> &str {
        match self {
            Term::Iri { value } | Term::Literal { value, .. } => value,
        }
    }

    pub fn datatype(&self) -> Option<&str> {
        match self {
            Term::Literal { datatype, .. } => datatype.as_deref(),
            Term::Iri { .. } => None,
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri { .. })
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }
}

impl fmt::Display for Term {
    /// TSV surface syntax.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri { value } => f.write_str(value),
            Term::Literal { value, datatype } => {
                f.write_str("\"")?;
                for c in value.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\t' => f.write_str("\\t")?,
                        '\n' => f.write_str("\\n")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(dt) = datatype {
                    write!(f, "^^{dt}")?;
                }
                Ok(())
            }
        }
    }
}

/// Maps the full XSD namespace onto the `xsd:` prefix used everywhere else.
pub fn normalize_datatype(datatype: &str) -> String {
    match datatype.strip_prefix(XSD_NAMESPACE) {
        Some(local) => format!("xsd:{local}"),
        None => datatype.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("IRI must not be empty")]
    EmptyIri,
    #[error("IRI must not contain whitespace: {0:?}")]
    WhitespaceInIri(String),
    #[error("expected an IRI, got literal {0:?}")]
    NotAnIri(String),
    #[error("triple {position} must be an IRI")]
    NonIriPosition { position: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, TermError> {
        if !subject.is_iri() {
            return Err(TermError::NonIriPosition { position: "subject" });
        }
        if !predicate.is_iri() {
            return Err(TermError::NonIriPosition {
                position: "predicate",
            });
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }
}

/// Dense id of an interned term. Ids follow first-seen order in the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KbFormat {
    #[default]
    Tsv,
    #[serde(alias = "ntriples")]
    NtriplesLike,
}

impl std::str::FromStr for KbFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(KbFormat::Tsv),
            "ntriples" | "ntriples-like" | "nt" => Ok(KbFormat::NtriplesLike),
            other => Err(format!("unknown KB format {other:?} (expected tsv or ntriples)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, byte offset {offset}: {message}")]
    Parse {
        line: usize,
        offset: usize,
        message: String,
    },
    #[error(transparent)]
    Term(#[from] TermError),
}

/// Indexed, immutable knowledge graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    spo: BTreeSet<(u32, u32, u32)>,
    pos: BTreeSet<(u32, u32, u32)>,
    osp: BTreeSet<(u32, u32, u32)>,
    labels: HashMap<TermId, String>,
    label_predicate: String,
}

/// Accumulates triples and interns terms; `build` freezes it into a [`KnowledgeBase`].
#[derive(Debug, Default)]
pub struct KbBuilder {
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    spo: BTreeSet<(u32, u32, u32)>,
}

impl KbBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, term: Term) -> TermId {
        if let Some(id) = self.ids.get(&term) {
            return *id;
        }
        let id = TermId(self.terms.len() as u32);
        self.terms.push(term.clone());
        self.ids.insert(term, id);
        id
    }

    pub fn insert(&mut self, triple: Triple) {
        let s = self.intern(triple.subject);
        let p = self.intern(triple.predicate);
        let o = self.intern(triple.object);
        self.spo.insert((s.0, p.0, o.0));
    }

    pub fn build(self, label_predicate: &str) -> KnowledgeBase {
        let pos = self.spo.iter().map(|&(s, p, o)| (p, o, s)).collect();
        let osp = self.spo.iter().map(|&(s, p, o)| (o, s, p)).collect();
        let mut labels = HashMap::new();
        if let Some(label_id) = self.ids.get(&Term::Iri {
            value: label_predicate.to_string(),
        }) {
            // first label in id order wins
            for &(s, p, o) in &self.spo {
                if p == label_id.0 {
                    labels
                        .entry(TermId(s))
                        .or_insert_with(|| self.terms[o as usize].value().to_string());
                }
            }
        }
        KnowledgeBase {
            terms: self.terms,
            ids: self.ids,
            spo: self.spo,
            pos,
            osp,
            labels,
            label_predicate: label_predicate.to_string(),
        }
    }
}

/// Triple pattern over optional ground terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pattern<'a> {
    pub subject: Option<&'a Term>,
    pub predicate: Option<&'a Term>,
    pub object: Option<&'a Term>,
}

/// Triple pattern over optional interned ids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdPattern {
    pub subject: Option<TermId>,
    pub predicate: Option<TermId>,
    pub object: Option<TermId>,
}

impl KnowledgeBase {
    pub fn empty(label_predicate: &str) -> Self {
        KbBuilder::new().build(label_predicate)
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>, label_predicate: &str) -> Self {
        let mut builder = KbBuilder::new();
        for t in triples {
            builder.insert(t);
        }
        builder.build(label_predicate)
    }

    pub fn load(path: impl AsRef<Path>, format: KbFormat) -> Result<Self, KbError> {
        Self::load_with(path, format, DEFAULT_LABEL_PREDICATE)
    }

    pub fn load_with(
        path: impl AsRef<Path>,
        format: KbFormat,
        label_predicate: &str,
    ) -> Result<Self, KbError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, format, label_predicate)
    }

    pub fn parse(text: &str, format: KbFormat, label_predicate: &str) -> Result<Self, KbError> {
        let mut builder = KbBuilder::new();
        let mut offset = 0usize;
        for (idx, raw_line) in text.split_inclusive('\n').enumerate() {
            let line_start = offset;
            offset += raw_line.len();
            let line = raw_line.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parsed = match format {
                KbFormat::Tsv => parse_tsv_line(line),
                KbFormat::NtriplesLike => parse_nt_line(line),
            };
            match parsed {
                Ok(triple) => builder.insert(triple),
                Err((col, message)) => {
                    return Err(KbError::Parse {
                        line: idx + 1,
                        offset: line_start + col,
                        message,
                    })
                }
            }
        }
        Ok(builder.build(label_predicate))
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label_predicate(&self) -> &str {
        &self.label_predicate
    }

    /// Sizes of the SPO, POS and OSP indexes; always equal.
    pub fn index_sizes(&self) -> (usize, usize, usize) {
        (self.spo.len(), self.pos.len(), self.osp.len())
    }

    pub fn id_of(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id.0 as usize]
    }

    pub fn get_term(&self, id: TermId) -> Option<&Term> {
        self.terms.get(id.0 as usize)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        match (
            self.id_of(&triple.subject),
            self.id_of(&triple.predicate),
            self.id_of(&triple.object),
        ) {
            (Some(s), Some(p), Some(o)) => self.spo.contains(&(s.0, p.0, o.0)),
            _ => false,
        }
    }

    /// Matching triples as `(s, p, o)` ids in lexicographic id order.
    pub fn match_ids(&self, pattern: IdPattern) -> Vec<(TermId, TermId, TermId)> {
        let IdPattern {
            subject: s,
            predicate: p,
            object: o,
        } = pattern;
        let mut out: Vec<(u32, u32, u32)> = match (s, p, o) {
            (Some(s), Some(p), Some(o)) => {
                if self.spo.contains(&(s.0, p.0, o.0)) {
                    vec![(s.0, p.0, o.0)]
                } else {
                    Vec::new()
                }
            }
            (Some(s), Some(p), None) => self
                .spo
                .range((s.0, p.0, 0)..=(s.0, p.0, u32::MAX))
                .copied()
                .collect(),
            (Some(s), None, None) => self
                .spo
                .range((s.0, 0, 0)..=(s.0, u32::MAX, u32::MAX))
                .copied()
                .collect(),
            (Some(s), None, Some(o)) => self
                .osp
                .range((o.0, s.0, 0)..=(o.0, s.0, u32::MAX))
                .map(|&(o, s, p)| (s, p, o))
                .collect(),
            (None, Some(p), Some(o)) => self
                .pos
                .range((p.0, o.0, 0)..=(p.0, o.0, u32::MAX))
                .map(|&(p, o, s)| (s, p, o))
                .collect(),
            (None, Some(p), None) => self
                .pos
                .range((p.0, 0, 0)..=(p.0, u32::MAX, u32::MAX))
                .map(|&(p, o, s)| (s, p, o))
                .collect(),
            (None, None, Some(o)) => self
                .osp
                .range((o.0, 0, 0)..=(o.0, u32::MAX, u32::MAX))
                .map(|&(o, s, p)| (s, p, o))
                .collect(),
            (None, None, None) => self.spo.iter().copied().collect(),
        };
        out.sort_unstable();
        out.into_iter()
            .map(|(s, p, o)| (TermId(s), TermId(p), TermId(o)))
            .collect()
    }

    /// Triples matching every ground position of `pattern`.
    pub fn triples_matching(&self, pattern: Pattern<'_>) -> Vec<Triple> {
        let resolve = |t: Option<&Term>| -> Result<Option<TermId>, ()> {
            match t {
                None => Ok(None),
                Some(term) => self.id_of(term).map(Some).ok_or(()),
            }
        };
        let (Ok(s), Ok(p), Ok(o)) = (
            resolve(pattern.subject),
            resolve(pattern.predicate),
            resolve(pattern.object),
        ) else {
            return Vec::new();
        };
        self.match_ids(IdPattern {
            subject: s,
            predicate: p,
            object: o,
        })
        .into_iter()
        .map(|(s, p, o)| Triple {
            subject: self.term(s).clone(),
            predicate: self.term(p).clone(),
            object: self.term(o).clone(),
        })
        .collect()
    }

    pub fn label_of(&self, term: &Term) -> Result<Option<&str>, TermError> {
        if let Term::Literal { value, .. } = term {
            return Err(TermError::NotAnIri(value.clone()));
        }
        Ok(self
            .id_of(term)
            .and_then(|id| self.labels.get(&id))
            .map(String::as_str))
    }

    pub fn label_of_id(&self, id: TermId) -> Option<&str> {
        self.labels.get(&id).map(String::as_str)
    }

    /// Text shown to the agent for a term: label, else raw IRI, else lexical value.
    pub fn display(&self, term: &Term) -> String {
        match term {
            Term::Iri { value } => self
                .id_of(term)
                .and_then(|id| self.labels.get(&id))
                .cloned()
                .unwrap_or_else(|| value.clone()),
            Term::Literal { value, .. } => value.clone(),
        }
    }

    /// SHA-256 over the canonical (sorted, TSV-rendered) triple set.
    pub fn fingerprint(&self) -> String {
        let mut lines: Vec<String> = self
            .spo
            .iter()
            .map(|&(s, p, o)| {
                format!(
                    "{}\t{}\t{}\n",
                    self.terms[s as usize], self.terms[p as usize], self.terms[o as usize]
                )
            })
            .collect();
        lines.sort();
        let mut hasher = Sha256::new();
        hasher.update(self.label_predicate.as_bytes());
        hasher.update(b"\n");
        for line in &lines {
            hasher.update(line.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

type LineError = (usize, String);

fn parse_tsv_line(line: &str) -> Result<Triple, LineError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err((
            0,
            format!("expected 3 tab-separated fields, found {}", fields.len()),
        ));
    }
    let mut col = 0;
    let mut terms = Vec::with_capacity(3);
    for field in fields {
        let term = parse_tsv_term(field).map_err(|(c, m)| (col + c, m))?;
        terms.push(term);
        col += field.len() + 1;
    }
    let object = terms.pop().expect("three fields");
    let predicate = terms.pop().expect("three fields");
    let subject = terms.pop().expect("three fields");
    if !subject.is_iri() {
        return Err((0, "subject must be an IRI".into()));
    }
    if !predicate.is_iri() {
        return Err((line.find('\t').map_or(0, |i| i + 1), "predicate must be an IRI".into()));
    }
    Ok(Triple {
        subject,
        predicate,
        object,
    })
}

fn parse_tsv_term(field: &str) -> Result<Term, LineError> {
    if field.starts_with('"') {
        let (value, rest) = parse_quoted(field)?;
        let consumed = field.len() - rest.len();
        if rest.is_empty() {
            return Ok(Term::Literal {
                value,
                datatype: None,
            });
        }
        match rest.strip_prefix("^^") {
            Some(dt) if !dt.is_empty() && !dt.chars().any(char::is_whitespace) => {
                let dt = dt
                    .strip_prefix('<')
                    .and_then(|d| d.strip_suffix('>'))
                    .unwrap_or(dt);
                Ok(Term::Literal {
                    value,
                    datatype: Some(normalize_datatype(dt)),
                })
            }
            _ => Err((consumed, format!("unexpected text after literal: {rest:?}"))),
        }
    } else {
        Term::iri(field).map_err(|e| (0, e.to_string()))
    }
}

/// Parses a double-quoted string at the start of `s`; returns the unescaped
/// value and the remainder after the closing quote.
fn parse_quoted(s: &str) -> Result<(String, &str), LineError> {
    let mut value = String::new();
    let mut chars = s.char_indices();
    chars.next(); // opening quote
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Ok((value, &s[i + 1..])),
            '\\' => match chars.next() {
                Some((_, '"')) => value.push('"'),
                Some((_, '\\')) => value.push('\\'),
                Some((_, 't')) => value.push('\t'),
                Some((_, 'n')) => value.push('\n'),
                Some((j, other)) => return Err((j, format!("invalid escape \\{other}"))),
                None => return Err((i, "dangling backslash".into())),
            },
            c => value.push(c),
        }
    }
    Err((0, "unterminated literal".into()))
}

fn parse_nt_line(line: &str) -> Result<Triple, LineError> {
    let mut rest = line;
    let mut pos = 0usize;
    let skip_ws = |rest: &mut &str, pos: &mut usize| {
        let trimmed = rest.trim_start();
        *pos += rest.len() - trimmed.len();
        *rest = trimmed;
    };
    let mut terms = Vec::with_capacity(3);
    for slot in 0..3 {
        skip_ws(&mut rest, &mut pos);
        if rest.starts_with('<') {
            let end = rest
                .find('>')
                .ok_or((pos, "unterminated IRI".to_string()))?;
            let term = Term::iri(&rest[1..end]).map_err(|e| (pos, e.to_string()))?;
            terms.push(term);
            pos += end + 1;
            rest = &rest[end + 1..];
        } else if slot == 2 && rest.starts_with('"') {
            let (value, after) = parse_quoted(rest).map_err(|(c, m)| (pos + c, m))?;
            pos += rest.len() - after.len();
            rest = after;
            let mut datatype = None;
            if let Some(after_caret) = rest.strip_prefix("^^") {
                let inner = after_caret
                    .strip_prefix('<')
                    .ok_or((pos + 2, "datatype must be written as <iri>".to_string()))?;
                let end = inner
                    .find('>')
                    .ok_or((pos + 2, "unterminated datatype IRI".to_string()))?;
                datatype = Some(normalize_datatype(&inner[..end]));
                pos += 3 + end + 1;
                rest = &inner[end + 1..];
            }
            terms.push(Term::Literal { value, datatype });
        } else {
            let what = ["subject", "predicate", "object"][slot];
            return Err((pos, format!("expected {what}")));
        }
    }
    skip_ws(&mut rest, &mut pos);
    if rest.trim_end() != "." {
        return Err((pos, "expected terminating '.'".into()));
    }
    let object = terms.pop().expect("three terms");
    let predicate = terms.pop().expect("three terms");
    let subject = terms.pop().expect("three terms");
    Ok(Triple {
        subject,
        predicate,
        object,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(v: &str) -> Term {
        Term::iri(v).unwrap()
    }

    const TOY: &str = "\
# toy graph
m.07g8r3\ttype.object.name\t\"London Tipton\"
m.07g8r3\tfilm.film_character.portrayed_in_films\tcvt1
cvt1\tfilm.performance.actor\tm.0btps
cvt1\tfilm.performance.character\tm.07g8r3
m.0btps\ttype.object.name\t\"Brenda Song\"
m.0btps\ttype.object.type\tfilm.actor
m.0btps\tpeople.person.date_of_birth\t\"1988-03-27\"^^xsd:date
m.03mj4jm\ttype.object.name\t\"The Suite Life on Deck\"
m.03mj4jm\ttype.object.type\ttv.tv_program
m.07g8r3\ttype.object.type\tfilm.film_character
cvt1\tfilm.performance.film\tm.0fake
m.0fake\tfilm.film.initial_release_date\t\"2008\"^^xsd:gYear
";

    fn toy() -> KnowledgeBase {
        KnowledgeBase::parse(TOY, KbFormat::Tsv, DEFAULT_LABEL_PREDICATE).unwrap()
    }

    #[test]
    fn counts_match_line_oracle() {
        // oracle: count non-comment lines and those with the label predicate
        let lines: Vec<&str> = TOY
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let label_lines = lines
            .iter()
            .filter(|l| l.split('\t').nth(1) == Some("type.object.name"))
            .count();
        assert_eq!(lines.len(), 12);
        assert_eq!(label_lines, 3);
        let kb = toy();
        assert_eq!(kb.len(), 12);
        assert_eq!(kb.label_count(), 3);
        assert_eq!(kb.index_sizes(), (12, 12, 12));
    }

    #[test]
    fn empty_and_duplicates() {
        let kb = KnowledgeBase::parse("", KbFormat::Tsv, DEFAULT_LABEL_PREDICATE).unwrap();
        assert_eq!((kb.len(), kb.label_count()), (0, 0));
        let kb = KnowledgeBase::parse("a\tb\tc\na\tb\tc\n", KbFormat::Tsv, "x").unwrap();
        assert_eq!(kb.len(), 1);
    }

    #[test]
    fn out_edges_match_linear_scan() {
        let kb = toy();
        let got = kb.triples_matching(Pattern {
            subject: Some(&iri("cvt1")),
            ..Default::default()
        });
        let expected: Vec<&str> = TOY.lines().filter(|l| l.starts_with("cvt1\t")).collect();
        assert_eq!(got.len(), expected.len());
        for t in &got {
            assert_eq!(t.subject, iri("cvt1"));
        }
        // id order: predicates were first seen in file order
        let preds: Vec<&str> = got.iter().map(|t| t.predicate.value()).collect();
        assert_eq!(
            preds,
            [
                "film.performance.actor",
                "film.performance.character",
                "film.performance.film"
            ]
        );
    }

    #[test]
    fn wildcard_and_ground_lookup() {
        let kb = toy();
        assert_eq!(kb.triples_matching(Pattern::default()).len(), 12);
        let name = iri("type.object.name");
        let lit = Term::literal("Brenda Song");
        let s = iri("m.0btps");
        let hit = kb.triples_matching(Pattern {
            subject: Some(&s),
            predicate: Some(&name),
            object: Some(&lit),
        });
        assert_eq!(hit.len(), 1);
        let missing = iri("m.nope");
        assert!(kb
            .triples_matching(Pattern {
                subject: Some(&missing),
                ..Default::default()
            })
            .is_empty());
    }

    #[test]
    fn labels_and_type_guard() {
        let kb = toy();
        assert_eq!(kb.label_of(&iri("m.0btps")).unwrap(), Some("Brenda Song"));
        assert_eq!(kb.label_of(&iri("cvt1")).unwrap(), None);
        assert!(matches!(
            kb.label_of(&Term::literal("x")),
            Err(TermError::NotAnIri(_))
        ));
        assert_eq!(kb.display(&iri("cvt1")), "cvt1");
    }

    #[test]
    fn typed_literals_and_escapes() {
        let kb = KnowledgeBase::parse(
            "a\tp\t\"1821-03-31\"^^xsd:date\na\tq\t\"say \\\"hi\\\"\\tnow\"\n",
            KbFormat::Tsv,
            "x",
        )
        .unwrap();
        assert!(kb.contains(&Triple {
            subject: iri("a"),
            predicate: iri("p"),
            object: Term::typed_literal("1821-03-31", "xsd:date"),
        }));
        assert!(kb.contains(&Triple {
            subject: iri("a"),
            predicate: iri("q"),
            object: Term::literal("say \"hi\"\tnow"),
        }));
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = KnowledgeBase::parse("a\tb\tc\nx\ty\n", KbFormat::Tsv, "l").unwrap_err();
        match err {
            KbError::Parse { line, offset, .. } => {
                assert_eq!(line, 2);
                assert_eq!(offset, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = KnowledgeBase::parse("a\tb\t\"open\n", KbFormat::Tsv, "l").unwrap_err();
        assert!(matches!(err, KbError::Parse { line: 1, .. }));
        let err = KnowledgeBase::parse("\"lit\"\tb\tc\n", KbFormat::Tsv, "l").unwrap_err();
        assert!(err.to_string().contains("subject must be an IRI"));
    }

    #[test]
    fn ntriples_like_format() {
        let text = "<m.1> <type.object.name> \"One\" .\n\
                    <m.1> <p.date> \"1870\"^^<http://www.w3.org/2001/XMLSchema#gYear> .\n\
                    <m.1> <p.link> <m.2> .\n";
        let kb = KnowledgeBase::parse(text, KbFormat::NtriplesLike, DEFAULT_LABEL_PREDICATE).unwrap();
        assert_eq!(kb.len(), 3);
        assert_eq!(kb.label_of(&iri("m.1")).unwrap(), Some("One"));
        assert!(kb.contains(&Triple {
            subject: iri("m.1"),
            predicate: iri("p.date"),
            object: Term::typed_literal("1870", "xsd:gYear"),
        }));
        let err = KnowledgeBase::parse("<a> <b> <c>\n", KbFormat::NtriplesLike, "l").unwrap_err();
        assert!(err.to_string().contains("terminating"));
    }

    #[test]
    fn load_is_idempotent() {
        let a = toy();
        let b = toy();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
