//! Index nested-loop evaluation of a [`QueryAst`] over a [`KnowledgeBase`].

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::time::Instant;

use super::ast::*;
use super::value::{compare, sort_key, SortKey};
use super::{EvalLimits, ResultSet, SparqlError};
use crate::kb::{IdPattern, KnowledgeBase, Term, TermId};

/// How often (in produced bindings) the deadline is polled inside a join step.
const DEADLINE_POLL: usize = 256;

/// Term ids for one evaluation: KB ids, plus ids past the end of the KB for
/// VALUES terms the KB has never seen (assigned in VALUES order).
struct Terms<'a> {
    kb: &'a KnowledgeBase,
    extra: Vec<Term>,
    extra_ids: HashMap<Term, TermId>,
}

impl<'a> Terms<'a> {
    fn new(kb: &'a KnowledgeBase) -> Self {
        Terms {
            kb,
            extra: Vec::new(),
            extra_ids: HashMap::new(),
        }
    }

    fn intern(&mut self, term: &Term) -> TermId {
        if let Some(id) = self.kb.id_of(term) {
            return id;
        }
        if let Some(id) = self.extra_ids.get(term) {
            return *id;
        }
        let id = TermId((self.kb.term_count() + self.extra.len()) as u32);
        self.extra.push(term.clone());
        self.extra_ids.insert(term.clone(), id);
        id
    }

    fn term(&self, id: TermId) -> &Term {
        let idx = id.0 as usize;
        if idx < self.kb.term_count() {
            self.kb.term(id)
        } else {
            &self.extra[idx - self.kb.term_count()]
        }
    }

    fn in_kb(&self, id: TermId) -> bool {
        (id.0 as usize) < self.kb.term_count()
    }
}

enum Slot {
    Var(usize),
    /// Constant present in the KB.
    Const(TermId),
    /// Constant absent from the KB; the pattern cannot match.
    Missing,
}

struct Budget {
    start: Instant,
    limits: EvalLimits,
    produced: usize,
}

impl Budget {
    fn check_deadline(&self) -> Result<(), SparqlError> {
        let elapsed = self.start.elapsed();
        if elapsed > self.limits.timeout {
            return Err(SparqlError::Timeout {
                limit: self.limits.timeout,
                elapsed,
            });
        }
        Ok(())
    }

    fn produce(&mut self) -> Result<(), SparqlError> {
        self.produced += 1;
        if self.produced > self.limits.max_intermediate_bindings {
            return Err(SparqlError::Resource(format!(
                "intermediate binding budget of {} exceeded",
                self.limits.max_intermediate_bindings
            )));
        }
        if self.produced % DEADLINE_POLL == 0 {
            self.check_deadline()?;
        }
        Ok(())
    }
}

type Row = Vec<Option<TermId>>;

pub fn evaluate(
    ast: &QueryAst,
    kb: &KnowledgeBase,
    limits: &EvalLimits,
) -> Result<ResultSet, SparqlError> {
    evaluate_from(ast, kb, limits, Instant::now())
}

/// Evaluates with the deadline measured from `start` rather than from the call.
pub fn evaluate_from(
    ast: &QueryAst,
    kb: &KnowledgeBase,
    limits: &EvalLimits,
    start: Instant,
) -> Result<ResultSet, SparqlError> {
    ast.validate().map_err(SparqlError::Contract)?;
    let mut budget = Budget {
        start,
        limits: limits.clone(),
        produced: 0,
    };
    budget.check_deadline()?;

    let vars = ast.bound_variables();
    let var_index: HashMap<&str, usize> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let mut terms = Terms::new(kb);

    // VALUES: cartesian product in block order
    let mut rows: Vec<Row> = vec![vec![None; vars.len()]];
    let mut bound: HashSet<usize> = HashSet::new();
    for block in &ast.values_blocks {
        let slot = var_index[block.variable.as_str()];
        let ids: Vec<TermId> = block.values.iter().map(|t| terms.intern(t)).collect();
        let mut next = Vec::with_capacity(rows.len() * ids.len());
        for row in &rows {
            for &id in &ids {
                let mut r = row.clone();
                r[slot] = Some(id);
                budget.produce()?;
                next.push(r);
            }
        }
        rows = next;
        bound.insert(slot);
    }

    let slot_of = |pt: &PatternTerm, terms: &Terms| -> Slot {
        match pt {
            PatternTerm::Var(v) => Slot::Var(var_index[v.as_str()]),
            PatternTerm::Term(t) => match terms.kb.id_of(t) {
                Some(id) => Slot::Const(id),
                None => Slot::Missing,
            },
        }
    };

    let mut applied = vec![false; ast.filters.len()];
    apply_ready_filters(ast, &var_index, &bound, &mut applied, &mut rows, &terms);

    let mut remaining: Vec<usize> = (0..ast.patterns.len()).collect();
    while !remaining.is_empty() {
        budget.check_deadline()?;
        // greedy: most bound positions first, ties by pattern order
        let (pick_pos, &pick) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                let ka = bound_positions(&ast.patterns[a], &var_index, &bound);
                let kb_ = bound_positions(&ast.patterns[b], &var_index, &bound);
                ka.cmp(&kb_).then(b.cmp(&a))
            })
            .expect("non-empty");
        remaining.remove(pick_pos);
        let pattern = &ast.patterns[pick];
        let slots = [
            slot_of(&pattern.subject, &terms),
            slot_of(&pattern.predicate, &terms),
            slot_of(&pattern.object, &terms),
        ];
        let mut next: Vec<Row> = Vec::new();
        if !slots.iter().any(|s| matches!(s, Slot::Missing)) {
            for row in &rows {
                let mut ids = [None; 3];
                let mut dead = false;
                for (k, slot) in slots.iter().enumerate() {
                    match slot {
                        Slot::Const(id) => ids[k] = Some(*id),
                        Slot::Var(v) => {
                            if let Some(id) = row[*v] {
                                if !terms.in_kb(id) {
                                    dead = true;
                                }
                                ids[k] = Some(id);
                            }
                        }
                        Slot::Missing => unreachable!(),
                    }
                }
                if dead {
                    continue;
                }
                let matches = kb.match_ids(IdPattern {
                    subject: ids[0],
                    predicate: ids[1],
                    object: ids[2],
                });
                'triple: for (s, p, o) in matches {
                    let mut r = row.clone();
                    for (slot, id) in slots.iter().zip([s, p, o]) {
                        if let Slot::Var(v) = slot {
                            match r[*v] {
                                Some(existing) if existing != id => continue 'triple,
                                _ => r[*v] = Some(id),
                            }
                        }
                    }
                    budget.produce()?;
                    next.push(r);
                }
            }
        }
        rows = next;
        for slot in &slots {
            if let Slot::Var(v) = slot {
                bound.insert(*v);
            }
        }
        apply_ready_filters(ast, &var_index, &bound, &mut applied, &mut rows, &terms);
    }
    budget.check_deadline()?;

    let full: Vec<Vec<TermId>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(|id| id.expect("all variables bound")).collect())
        .collect();
    let projection: Vec<usize> = ast
        .select_vars
        .iter()
        .map(|v| var_index[v.as_str()])
        .collect();
    let ordered = order_rows(ast, &var_index, &projection, full, &terms);
    budget.check_deadline()?;

    let mut seen: HashSet<Vec<TermId>> = HashSet::new();
    let mut projected: Vec<Vec<TermId>> = Vec::new();
    for row in ordered {
        let p: Vec<TermId> = projection.iter().map(|&i| row[i]).collect();
        if ast.distinct && !seen.insert(p.clone()) {
            continue;
        }
        projected.push(p);
    }
    let cap = ast.limit.unwrap_or(usize::MAX).min(limits.max_rows);
    let truncated = projected.len() > cap;
    projected.truncate(cap);
    Ok(ResultSet {
        columns: ast.select_vars.clone(),
        rows: projected
            .into_iter()
            .map(|r| r.into_iter().map(|id| terms.term(id).clone()).collect())
            .collect(),
        truncated,
    })
}

fn bound_positions(
    p: &TriplePattern,
    var_index: &HashMap<&str, usize>,
    bound: &HashSet<usize>,
) -> usize {
    p.positions()
        .iter()
        .filter(|pt| match pt {
            PatternTerm::Term(_) => true,
            PatternTerm::Var(v) => bound.contains(&var_index[v.as_str()]),
        })
        .count()
}

fn apply_ready_filters(
    ast: &QueryAst,
    var_index: &HashMap<&str, usize>,
    bound: &HashSet<usize>,
    applied: &mut [bool],
    rows: &mut Vec<Row>,
    terms: &Terms,
) {
    for (i, f) in ast.filters.iter().enumerate() {
        let slot = var_index[f.lhs.variable.as_str()];
        if applied[i] || !bound.contains(&slot) {
            continue;
        }
        applied[i] = true;
        rows.retain(|r| {
            let term = terms.term(r[slot].expect("bound"));
            compare(term, f.lhs.cast, f.op, &f.rhs)
        });
    }
}

/// Sorts rows by the ORDER BY key (if any), then by projected ids, then by
/// the full row. Without ORDER BY the order is the id order alone.
fn order_rows(
    ast: &QueryAst,
    var_index: &HashMap<&str, usize>,
    projection: &[usize],
    rows: Vec<Vec<TermId>>,
    terms: &Terms,
) -> Vec<Vec<TermId>> {
    let tiebreak = |a: &Vec<TermId>, b: &Vec<TermId>| -> Ordering {
        let pa = projection.iter().map(|&i| a[i]);
        let pb = projection.iter().map(|&i| b[i]);
        pa.cmp(pb).then_with(|| a.cmp(b))
    };
    match &ast.order_by {
        None => {
            let mut rows = rows;
            rows.sort_by(tiebreak);
            rows
        }
        Some(order) => {
            let slot = var_index[order.operand.variable.as_str()];
            let mut keyed: Vec<(Option<SortKey>, Vec<TermId>)> = rows
                .into_iter()
                .map(|r| (sort_key(terms.term(r[slot]), order.operand.cast), r))
                .collect();
            keyed.sort_by(|(ka, ra), (kb, rb)| {
                let primary = match (ka, kb) {
                    (Some(a), Some(b)) => {
                        let o = a.total_cmp(b);
                        match order.direction {
                            Direction::Asc => o,
                            Direction::Desc => o.reverse(),
                        }
                    }
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                };
                primary.then_with(|| tiebreak(ra, rb))
            });
            keyed.into_iter().map(|(_, r)| r).collect()
        }
    }
}
