use std::collections::HashSet;
use std::fmt;

use crate::kb::Term;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Var(String),
    Term(Term),
}

impl PatternTerm {
    pub fn var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Term(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn positions(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValuesBlock {
    pub variable: String,
    pub values: Vec<Term>,
}

/// Typed cast applied to a variable in ORDER BY or FILTER.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cast {
    Date,
    Integer,
    Float,
}

impl Cast {
    pub fn from_function(name: &str) -> Option<Cast> {
        match name {
            "xsd:date" | "xsd:dateTime" | "xsd:gYear" | "xsd:gYearMonth" => Some(Cast::Date),
            "xsd:integer" | "xsd:int" | "xsd:long" => Some(Cast::Integer),
            "xsd:float" | "xsd:double" | "xsd:decimal" => Some(Cast::Float),
            _ => None,
        }
    }

    pub fn function_name(self) -> &'static str {
        match self {
            Cast::Date => "xsd:date",
            Cast::Integer => "xsd:integer",
            Cast::Float => "xsd:float",
        }
    }
}

/// A variable, optionally wrapped in a cast function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub variable: String,
    pub cast: Option<Cast>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterExpr {
    pub lhs: Operand,
    pub op: CompareOp,
    pub rhs: Term,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderBy {
    pub operand: Operand,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub select_vars: Vec<String>,
    pub distinct: bool,
    pub patterns: Vec<TriplePattern>,
    pub values_blocks: Vec<ValuesBlock>,
    pub filters: Vec<FilterExpr>,
    pub order_by: Option<OrderBy>,
    pub limit: Option<usize>,
}

impl QueryAst {
    /// Variables bound by the WHERE clause: VALUES variables first, then
    /// pattern variables in pattern order. This order also defines the
    /// tie-breaking row order used by the evaluator.
    pub fn bound_variables(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let values = self.values_blocks.iter().map(|b| b.variable.as_str());
        let patterns = self
            .patterns
            .iter()
            .flat_map(|p| p.positions().into_iter().filter_map(PatternTerm::var));
        for v in values.chain(patterns) {
            if seen.insert(v) {
                out.push(v.to_string());
            }
        }
        out
    }

    /// Checks the structural invariants; the message names the offending variable.
    pub fn validate(&self) -> Result<(), String> {
        let bound: HashSet<String> = self.bound_variables().into_iter().collect();
        for v in &self.select_vars {
            if !bound.contains(v) {
                return Err(format!("variable ?{v} in SELECT is not bound in WHERE"));
            }
        }
        for f in &self.filters {
            if !bound.contains(&f.lhs.variable) {
                return Err(format!(
                    "variable ?{} in FILTER is not bound in WHERE",
                    f.lhs.variable
                ));
            }
        }
        if let Some(order) = &self.order_by {
            if !bound.contains(&order.operand.variable) {
                return Err(format!(
                    "variable ?{} in ORDER BY is not bound in WHERE",
                    order.operand.variable
                ));
            }
        }
        let mut seen = HashSet::new();
        for b in &self.values_blocks {
            if !seen.insert(&b.variable) {
                return Err(format!(
                    "variable ?{} is bound by more than one VALUES block",
                    b.variable
                ));
            }
        }
        for p in &self.patterns {
            if let PatternTerm::Term(t) = &p.predicate {
                if t.is_literal() {
                    return Err("predicate must be an IRI or variable".into());
                }
            }
        }
        if self.limit == Some(0) {
            return Err("LIMIT must be positive".into());
        }
        Ok(())
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Term(t) => write_term(f, t),
        }
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, t: &Term) -> fmt::Result {
    match t {
        Term::Iri { value } => write!(f, "ns:{value}"),
        Term::Literal { value, datatype } => {
            write!(f, "\"")?;
            for c in value.chars() {
                match c {
                    '"' => write!(f, "\\\"")?,
                    '\\' => write!(f, "\\\\")?,
                    '\n' => write!(f, "\\n")?,
                    '\t' => write!(f, "\\t")?,
                    '\r' => write!(f, "\\r")?,
                    c => write!(f, "{c}")?,
                }
            }
            write!(f, "\"")?;
            match datatype {
                Some(dt) => write!(f, "^^{dt}"),
                None => Ok(()),
            }
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cast {
            Some(c) => write!(f, "{}(?{})", c.function_name(), self.variable),
            None => write!(f, "?{}", self.variable),
        }
    }
}

impl fmt::Display for QueryAst {
    /// Renders query text that parses back to an equal AST when IRIs are
    /// plain `ns:`-style local names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT ")?;
        if self.distinct {
            write!(f, "DISTINCT ")?;
        }
        let vars: Vec<String> = self.select_vars.iter().map(|v| format!("?{v}")).collect();
        write!(f, "{} WHERE {{ ", vars.join(" "))?;
        for b in &self.values_blocks {
            write!(f, "VALUES ?{} {{", b.variable)?;
            for v in &b.values {
                write!(f, " ")?;
                write_term(f, v)?;
            }
            write!(f, " }} . ")?;
        }
        for p in &self.patterns {
            write!(f, "{} {} {} . ", p.subject, p.predicate, p.object)?;
        }
        for flt in &self.filters {
            write!(f, "FILTER ({} {} ", flt.lhs, flt.op.symbol())?;
            write_term(f, &flt.rhs)?;
            write!(f, ") ")?;
        }
        write!(f, "}}")?;
        if let Some(o) = &self.order_by {
            let dir = match o.direction {
                Direction::Asc => "ASC",
                Direction::Desc => "DESC",
            };
            write!(f, " ORDER BY {dir}({})", o.operand)?;
        }
        if let Some(l) = self.limit {
            write!(f, " LIMIT {l}")?;
        }
        Ok(())
    }
}
