//! Random knowledge bases and queries, and a brute-force reference
//! evaluator: nested loops over the full triple list, no indexes.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Duration;

use kbagym_core::kb::{KnowledgeBase, Pattern, Term, Triple, DEFAULT_LABEL_PREDICATE};
use kbagym_core::sparql::value::compare;
use kbagym_core::sparql::{
    Cast, CompareOp, Direction, EvalLimits, FilterExpr, Operand, OrderBy, PatternTerm, QueryAst, ResultSet,
    TriplePattern, ValuesBlock,
};
use proptest::prelude::*;

pub const VARS: [&str; 3] = ["a", "b", "c"];

pub fn entity(i: u8) -> Term {
    Term::iri(format!("m.e{i}")).unwrap()
}

pub fn predicate(i: u8) -> Term {
    Term::iri(format!("rel.p{i}")).unwrap()
}

pub fn number(i: u8) -> Term {
    Term::typed_literal(i.to_string(), "xsd:integer")
}

pub fn word(i: u8) -> Term {
    Term::literal(format!("s{i}"))
}

fn arb_object() -> BoxedStrategy<Term> {
    prop_oneof![
        3 => (0u8..6).prop_map(entity),
        2 => (0u8..4).prop_map(number),
        1 => (0u8..3).prop_map(word),
    ]
    .boxed()
}

pub fn arb_triple() -> impl Strategy<Value = Triple> {
    (0u8..5, 0u8..3, arb_object()).prop_map(|(s, p, o)| Triple::new(entity(s), predicate(p), o).unwrap())
}

/// Up to `max` triples, in insertion order.
pub fn arb_triples(max: usize) -> impl Strategy<Value = Vec<Triple>> {
    prop::collection::vec(arb_triple(), 0..=max)
}

fn arb_slot(consts: BoxedStrategy<Term>) -> BoxedStrategy<PatternTerm> {
    prop_oneof![
        2 => (0usize..3).prop_map(|i| PatternTerm::Var(VARS[i].to_string())),
        1 => consts.prop_map(PatternTerm::Term),
    ]
    .boxed()
}

fn arb_pattern() -> impl Strategy<Value = TriplePattern> {
    (
        arb_slot((0u8..6).prop_map(entity).boxed()),
        arb_slot((0u8..4).prop_map(predicate).boxed()),
        arb_slot(arb_object()),
    )
        .prop_map(|(subject, predicate, object)| TriplePattern {
            subject,
            predicate,
            object,
        })
}

fn arb_op() -> impl Strategy<Value = CompareOp> {
    prop_oneof![Just(CompareOp::Lt), Just(CompareOp::Ge), Just(CompareOp::Ne), Just(CompareOp::Eq)]
}

/// Queries of 1 to 3 patterns with optional DISTINCT, VALUES, FILTER,
/// ORDER BY and LIMIT.
pub fn arb_query() -> impl Strategy<Value = QueryAst> {
    (
        prop::collection::vec(arb_pattern(), 1..4),
        prop::option::of(prop::collection::vec(0u8..7, 1..4)),
        prop::option::of((0u8..4, arb_op(), any::<bool>())),
        any::<bool>(),
        prop::collection::vec(any::<bool>(), 3),
        prop::option::of((0usize..3, any::<bool>(), any::<bool>())),
        prop::option::of(1usize..6),
    )
        .prop_filter_map(
            "needs a bound variable",
            |(patterns, values, filter, distinct, pick, order, limit)| {
                let mut ast = QueryAst {
                    select_vars: Vec::new(),
                    distinct,
                    patterns,
                    values_blocks: Vec::new(),
                    filters: Vec::new(),
                    order_by: None,
                    limit,
                };
                let bound = ast.bound_variables();
                let first = bound.first()?.clone();
                if let Some(ids) = values {
                    ast.values_blocks.push(ValuesBlock {
                        variable: first.clone(),
                        values: ids.into_iter().map(entity).collect(),
                    });
                }
                if let Some((n, op, cast)) = filter {
                    ast.filters.push(FilterExpr {
                        lhs: Operand {
                            variable: bound.last()?.clone(),
                            cast: cast.then_some(Cast::Integer),
                        },
                        op,
                        rhs: number(n),
                    });
                }
                if let Some((i, desc, cast)) = order {
                    ast.order_by = Some(OrderBy {
                        operand: Operand {
                            variable: bound[i % bound.len()].clone(),
                            cast: cast.then_some(Cast::Integer),
                        },
                        direction: if desc { Direction::Desc } else { Direction::Asc },
                    });
                }
                ast.select_vars = bound
                    .iter()
                    .zip(pick)
                    .filter(|(_, keep)| *keep)
                    .map(|(v, _)| v.clone())
                    .collect();
                if ast.select_vars.is_empty() {
                    ast.select_vars.push(first);
                }
                Some(ast)
            },
        )
}

pub fn kb_of(triples: &[Triple]) -> KnowledgeBase {
    KnowledgeBase::from_triples(triples.to_vec(), DEFAULT_LABEL_PREDICATE)
}

pub fn limits() -> EvalLimits {
    EvalLimits {
        timeout: Duration::from_secs(30),
        max_rows: 1_000_000,
        max_intermediate_bindings: 1_000_000,
    }
}

type Binding = HashMap<String, Term>;

fn unify(slot: &PatternTerm, term: &Term, b: &mut Binding) -> bool {
    match slot {
        PatternTerm::Term(t) => t == term,
        PatternTerm::Var(v) => match b.get(v) {
            Some(existing) => existing == term,
            None => {
                b.insert(v.clone(), term.clone());
                true
            }
        },
    }
}

/// Row-order ranks: first appearance in the source (subject, predicate,
/// object of each triple), then unseen VALUES terms in query order.
fn first_seen_ranks(source: &[Triple], ast: &QueryAst) -> HashMap<Term, usize> {
    let mut rank = HashMap::new();
    let mut see = |t: &Term| {
        let n = rank.len();
        rank.entry(t.clone()).or_insert(n);
    };
    for t in source {
        see(&t.subject);
        see(&t.predicate);
        see(&t.object);
    }
    for block in &ast.values_blocks {
        for v in &block.values {
            see(v);
        }
    }
    rank
}

#[derive(Debug, PartialEq, PartialOrd)]
enum Key {
    Iri(String),
    Number(f64),
    Str(String),
}

fn order_key(term: &Term, cast: Option<Cast>) -> Option<Key> {
    match (term, cast) {
        (Term::Iri { .. }, Some(_)) => None,
        (Term::Iri { value }, None) => Some(Key::Iri(value.clone())),
        (Term::Literal { value, .. }, Some(_)) => value.trim().parse::<i64>().ok().map(|n| Key::Number(n as f64)),
        (Term::Literal { value, datatype }, None) => match datatype.as_deref() {
            Some("xsd:integer") => Some(Key::Number(value.parse::<i64>().unwrap() as f64)),
            _ => Some(Key::Str(value.clone())),
        },
    }
}

fn key_order(a: &Option<Key>, b: &Option<Key>, dir: Direction) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => {
            let o = x.partial_cmp(y).expect("comparable keys");
            if dir == Direction::Desc { o.reverse() } else { o }
        }
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Rows in the canonical result order: ORDER BY key (failed casts last),
/// then projected terms by first appearance, then the whole binding.
pub fn oracle(ast: &QueryAst, kb: &KnowledgeBase, source: &[Triple]) -> ResultSet {
    let all = kb.triples_matching(Pattern::default());
    let mut bindings: Vec<Binding> = vec![Binding::new()];
    for block in &ast.values_blocks {
        bindings = bindings
            .iter()
            .flat_map(|b| {
                block.values.iter().map(move |v| {
                    let mut b = b.clone();
                    b.insert(block.variable.clone(), v.clone());
                    b
                })
            })
            .collect();
    }
    for p in &ast.patterns {
        let mut next = Vec::new();
        for b in &bindings {
            for t in &all {
                let mut nb = b.clone();
                if unify(&p.subject, &t.subject, &mut nb)
                    && unify(&p.predicate, &t.predicate, &mut nb)
                    && unify(&p.object, &t.object, &mut nb)
                {
                    next.push(nb);
                }
            }
        }
        bindings = next;
    }
    bindings.retain(|b| {
        ast.filters
            .iter()
            .all(|f| compare(&b[&f.lhs.variable], f.lhs.cast, f.op, &f.rhs))
    });

    let rank = first_seen_ranks(source, ast);
    let vars = ast.bound_variables();
    let ranks_of = |b: &Binding, vs: &[String]| -> Vec<usize> { vs.iter().map(|v| rank[&b[v]]).collect() };
    bindings.sort_by(|x, y| {
        let primary = match &ast.order_by {
            Some(o) => key_order(
                &order_key(&x[&o.operand.variable], o.operand.cast),
                &order_key(&y[&o.operand.variable], o.operand.cast),
                o.direction,
            ),
            None => Ordering::Equal,
        };
        primary
            .then_with(|| ranks_of(x, &ast.select_vars).cmp(&ranks_of(y, &ast.select_vars)))
            .then_with(|| ranks_of(x, &vars).cmp(&ranks_of(y, &vars)))
    });

    let mut rows: Vec<Vec<Term>> = Vec::new();
    for b in &bindings {
        let row: Vec<Term> = ast.select_vars.iter().map(|v| b[v].clone()).collect();
        if ast.distinct && rows.contains(&row) {
            continue;
        }
        rows.push(row);
    }
    let cap = ast.limit.unwrap_or(usize::MAX);
    let truncated = rows.len() > cap;
    rows.truncate(cap);
    ResultSet {
        columns: ast.select_vars.clone(),
        rows,
        truncated,
    }
}
