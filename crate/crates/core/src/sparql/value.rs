//! Typed views of literals for FILTER comparison and ORDER BY.

use std::cmp::Ordering;

use super::ast::{Cast, CompareOp};
use crate::kb::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DateValue {
    pub year: i64,
    pub month: u8,
    pub day: u8,
}

impl DateValue {
    /// Accepts `YYYY`, `YYYY-MM` and `YYYY-MM-DD`, optionally followed by a
    /// time or timezone suffix. Missing components default to 1.
    pub fn parse(s: &str) -> Option<DateValue> {
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let date_part = body.split(['T', 'Z', '+']).next()?;
        let mut parts = date_part.split('-');
        let year_str = parts.next()?;
        if year_str.len() < 4 || !year_str.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let mut year: i64 = year_str.parse().ok()?;
        if neg {
            year = -year;
        }
        let mut component = |lo: u8, hi: u8| -> Option<Option<u8>> {
            match parts.next() {
                None => Some(None),
                Some(p) if p.len() == 2 && p.bytes().all(|b| b.is_ascii_digit()) => {
                    let v: u8 = p.parse().ok()?;
                    (lo..=hi).contains(&v).then_some(Some(v))
                }
                Some(_) => None,
            }
        };
        let month = component(1, 12)?;
        let day = if month.is_some() { component(1, 31)? } else { None };
        if parts.next().is_some() {
            return None;
        }
        Some(DateValue {
            year,
            month: month.unwrap_or(1),
            day: day.unwrap_or(1),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Typed {
    Int(i64),
    Float(f64),
    Date(DateValue),
}

impl Typed {
    fn cmp(&self, other: &Typed) -> Option<Ordering> {
        match (self, other) {
            (Typed::Int(a), Typed::Int(b)) => Some(a.cmp(b)),
            (Typed::Date(a), Typed::Date(b)) => Some(a.cmp(b)),
            (a, b) => Some(a.as_f64()?.total_cmp(&b.as_f64()?)),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Typed::Int(i) => Some(*i as f64),
            Typed::Float(f) => Some(*f),
            Typed::Date(_) => None,
        }
    }
}

pub fn is_numeric_datatype(dt: &str) -> bool {
    matches!(
        dt,
        "xsd:integer"
            | "xsd:int"
            | "xsd:long"
            | "xsd:short"
            | "xsd:nonNegativeInteger"
            | "xsd:positiveInteger"
            | "xsd:decimal"
            | "xsd:float"
            | "xsd:double"
    )
}

pub fn is_date_datatype(dt: &str) -> bool {
    matches!(dt, "xsd:date" | "xsd:dateTime" | "xsd:gYear" | "xsd:gYearMonth")
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let s = s.strip_prefix('+').unwrap_or(s);
    s.parse().ok()
}

fn parse_float(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Applies a cast to a bound term. IRIs never cast.
pub fn cast(term: &Term, cast: Cast) -> Option<Typed> {
    let Term::Literal { value, .. } = term else {
        return None;
    };
    match cast {
        Cast::Date => DateValue::parse(value).map(Typed::Date),
        Cast::Integer => parse_int(value).map(Typed::Int),
        Cast::Float => parse_float(value).map(Typed::Float),
    }
}

/// Typed value implied by a literal's own datatype, if it has a typed domain.
pub fn natural(term: &Term) -> Option<Typed> {
    let Term::Literal {
        value,
        datatype: Some(dt),
    } = term
    else {
        return None;
    };
    if is_date_datatype(dt) {
        DateValue::parse(value).map(Typed::Date)
    } else if is_numeric_datatype(dt) {
        parse_int(value)
            .filter(|_| !value.contains(['.', 'e', 'E']))
            .map(Typed::Int)
            .or_else(|| parse_float(value).map(Typed::Float))
    } else {
        None
    }
}

fn is_plain_string(term: &Term) -> bool {
    matches!(
        term,
        Term::Literal { datatype: None, .. }
    ) || term.datatype() == Some("xsd:string")
}

fn apply(op: CompareOp, ord: Ordering) -> bool {
    match op {
        CompareOp::Eq => ord == Ordering::Equal,
        CompareOp::Ne => ord != Ordering::Equal,
        CompareOp::Lt => ord == Ordering::Less,
        CompareOp::Le => ord != Ordering::Greater,
        CompareOp::Gt => ord == Ordering::Greater,
        CompareOp::Ge => ord != Ordering::Less,
    }
}

/// FILTER semantics. Incomparable operands make the filter false.
pub fn compare(lhs: &Term, lhs_cast: Option<Cast>, op: CompareOp, rhs: &Term) -> bool {
    if let Some(c) = lhs_cast {
        return match (cast(lhs, c), cast(rhs, c)) {
            (Some(a), Some(b)) => a.cmp(&b).is_some_and(|o| apply(op, o)),
            _ => false,
        };
    }
    if let (Some(a), Some(b)) = (natural(lhs), natural(rhs)) {
        if let Some(ord) = a.cmp(&b) {
            return apply(op, ord);
        }
    }
    match op {
        CompareOp::Eq => lhs == rhs,
        CompareOp::Ne => lhs != rhs,
        _ if is_plain_string(lhs) && is_plain_string(rhs) => apply(op, lhs.value().cmp(rhs.value())),
        _ => false,
    }
}

/// Sort key for ORDER BY. A cast that fails yields `None`, which the
/// evaluator places after every successful cast regardless of direction.
#[derive(Debug, Clone, PartialEq)]
pub enum SortKey {
    Iri(String),
    Number(f64),
    Date(DateValue),
    Str(String),
}

impl SortKey {
    fn rank(&self) -> u8 {
        match self {
            SortKey::Iri(_) => 0,
            SortKey::Number(_) => 1,
            SortKey::Date(_) => 2,
            SortKey::Str(_) => 3,
        }
    }

    pub fn total_cmp(&self, other: &SortKey) -> Ordering {
        match (self, other) {
            (SortKey::Iri(a), SortKey::Iri(b)) | (SortKey::Str(a), SortKey::Str(b)) => a.cmp(b),
            (SortKey::Number(a), SortKey::Number(b)) => a.total_cmp(b),
            (SortKey::Date(a), SortKey::Date(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

pub fn sort_key(term: &Term, c: Option<Cast>) -> Option<SortKey> {
    let typed_key = |t: Typed| match t {
        Typed::Int(i) => SortKey::Number(i as f64),
        Typed::Float(f) => SortKey::Number(f),
        Typed::Date(d) => SortKey::Date(d),
    };
    match c {
        Some(c) => cast(term, c).map(typed_key),
        None => Some(match term {
            Term::Iri { value } => SortKey::Iri(value.clone()),
            lit => natural(lit)
                .map(typed_key)
                .unwrap_or_else(|| SortKey::Str(lit.value().to_string())),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn date_parsing() {
        assert_eq!(
            DateValue::parse("1821-03-31"),
            Some(DateValue { year: 1821, month: 3, day: 31 })
        );
        assert_eq!(
            DateValue::parse("1870"),
            Some(DateValue { year: 1870, month: 1, day: 1 })
        );
        assert_eq!(
            DateValue::parse("2008-05-01T10:00:00Z"),
            Some(DateValue { year: 2008, month: 5, day: 1 })
        );
        assert_eq!(DateValue::parse("-0500").map(|d| d.year), Some(-500));
        assert_eq!(DateValue::parse("n/a"), None);
        assert_eq!(DateValue::parse("1999-13"), None);
        assert_eq!(DateValue::parse("99"), None);
    }

    #[test]
    fn cast_failures() {
        assert!(cast(&Term::literal("abc"), Cast::Integer).is_none());
        assert!(cast(&Term::iri("m.1").unwrap(), Cast::Date).is_none());
        assert!(cast(&Term::literal("NaN"), Cast::Float).is_none());
        assert_eq!(cast(&Term::literal(" 42 "), Cast::Integer), Some(Typed::Int(42)));
    }

    #[test]
    fn filter_comparisons() {
        let five = Term::typed_literal("5", "xsd:integer");
        let ten = Term::typed_literal("10", "xsd:integer");
        assert!(compare(&five, None, CompareOp::Lt, &ten));
        // lexical order would say "5" > "10"
        assert!(!compare(&five, None, CompareOp::Gt, &ten));
        assert!(compare(&Term::literal("5"), Some(Cast::Integer), CompareOp::Lt, &ten));
        let d1 = Term::typed_literal("1829", "xsd:date");
        let d2 = Term::typed_literal("1870-09-01", "xsd:date");
        assert!(compare(&d1, None, CompareOp::Lt, &d2));
        assert!(compare(&Term::literal("a"), None, CompareOp::Lt, &Term::literal("b")));
        let m1 = Term::iri("m.1").unwrap();
        assert!(compare(&m1, None, CompareOp::Eq, &m1));
        assert!(!compare(&m1, None, CompareOp::Lt, &m1));
        assert!(compare(&m1, None, CompareOp::Ne, &five));
        assert!(!compare(&Term::literal("x"), Some(Cast::Date), CompareOp::Ne, &d1));
    }
}
