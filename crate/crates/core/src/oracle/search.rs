//! Bounded do-calculus derivation search.
//!
//! States are single terms `P(A | do(X), B)`. A term is *resolved* when an
//! information-set member yields it by marginalization and conditioning.
//! Every move rewrites one term into an expression over other terms:
//!
//! * rules 1-3 of the do-calculus on a single vertex (insert or delete an
//!   observation or action, or exchange one for the other),
//! * marginalization `P(A|..) = Σ_C P(A, C|..)` over absent vertices,
//! * conditioning `P(A|.., C) = P(A, C|..) / P(C|..)`,
//! * the chain rule `P(A1, A2|..) = P(A1|.., A2) P(A2|..)`.
//!
//! The cost of a derivation is its number of steps; the cheapest derivation
//! of every term over the reachable term space is found with Knuth's
//! generalization of Dijkstra's algorithm to AND-OR graphs, then unrolled
//! into a step sequence that rewrites the leftmost unresolved term first.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;

use serde_json::{json, Value};

use crate::dsep::{rule_applicable, rule_holds, Rule};
use crate::formula::{render, Atom, Expr, Style};
use crate::graph::SemiMarkovGraph;
use crate::surrogate::InfoSet;
use crate::vset::VertexSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    /// Maximum number of steps in a derivation.
    pub max_depth: usize,
    /// Maximum number of terms in the derived expression.
    pub max_terms: usize,
    /// Maximum number of distinct terms explored.
    pub max_queue: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { max_depth: 14, max_terms: 8, max_queue: 100_000 }
    }
}

/// One rewrite of a single term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move {
    /// A do-calculus rule for `(Y, Z, X, W)`; the term is one side of the
    /// rule's equation and `to` the other.
    Rule { rule: Rule, y: VertexSet, z: VertexSet, x: VertexSet, w: VertexSet, to: Atom },
    /// `P(A|..) = Σ_C P(A, C|..)`.
    Marginalize { vars: VertexSet },
    /// `P(A|.., C) = P(A, C|..) / P(C|..)`.
    Condition { vars: VertexSet },
    /// `P(A|..) = P(A1|.., A \ A1) P(A \ A1|..)`.
    ChainSplit { first: VertexSet },
}

impl Move {
    fn tag(&self) -> &'static str {
        match self {
            Move::Rule { .. } => "rule",
            Move::Marginalize { .. } => "m",
            Move::Condition { .. } => "c",
            Move::ChainSplit { .. } => "r",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub term: Atom,
    pub mv: Move,
    /// The whole expression after the step.
    pub result: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub target: Atom,
    pub steps: Vec<Step>,
    pub result: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayError {
    MissingTerm(usize),
    InvalidMove(usize, String),
    RuleFails(usize),
    ResultMismatch(usize),
    Unresolved(String),
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::MissingTerm(i) => write!(f, "step {i}: term does not occur in the expression"),
            ReplayError::InvalidMove(i, m) => write!(f, "step {i}: {m}"),
            ReplayError::RuleFails(i) => write!(f, "step {i}: rule precondition does not hold"),
            ReplayError::ResultMismatch(i) => write!(f, "step {i}: recorded expression differs from replay"),
            ReplayError::Unresolved(t) => write!(f, "final expression has unresolved term {t}"),
        }
    }
}

impl std::error::Error for ReplayError {}

/// Why a search ended without a derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exhaustion {
    /// The whole reachable term space was explored.
    Space,
    /// `max_queue` terms were explored.
    Queue,
    /// Every derivation found exceeds `max_depth` steps.
    Depth,
    /// The derived expression exceeds `max_terms` terms.
    Terms,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(Derivation),
    NotFound { reason: Exhaustion, terms_explored: usize },
}

impl SearchOutcome {
    pub fn derivation(&self) -> Option<&Derivation> {
        match self {
            SearchOutcome::Found(d) => Some(d),
            SearchOutcome::NotFound { .. } => None,
        }
    }
}

/// The two sides of rule `rule`'s equation for `(Y, Z, X, W)`.
pub fn rule_sides(rule: Rule, y: VertexSet, z: VertexSet, x: VertexSet, w: VertexSet) -> (Atom, Atom) {
    match rule {
        Rule::One => (Atom::new(0, y, x, z | w), Atom::new(0, y, x, w)),
        Rule::Two => (Atom::new(0, y, x | z, w), Atom::new(0, y, x, z | w)),
        Rule::Three => (Atom::new(0, y, x | z, w), Atom::new(0, y, x, w)),
    }
}

/// The expression a move rewrites `t` into, or why the move does not apply
/// to `t` syntactically.
pub fn expansion(t: &Atom, mv: &Move) -> Result<Expr, String> {
    let (a, x, b) = (t.outcomes, t.do_set, t.given);
    match mv {
        Move::Rule { rule, y, z, x: rx, w, to } => {
            let (l, r) = rule_sides(*rule, *y, *z, *rx, *w);
            let strip = |s: &Atom| Atom { domain: 0, ..s.clone() };
            let (t0, to0) = (strip(t), strip(to));
            if (t0 == l && to0 == r) || (t0 == r && to0 == l) {
                Ok(Expr::atom(Atom { domain: t.domain, ..to.clone() }))
            } else {
                Err("term is not a side of the rule".into())
            }
        }
        Move::Marginalize { vars } => {
            if vars.is_empty() || !vars.is_disjoint(t.variables()) {
                return Err("marginalized variables must be new".into());
            }
            Ok(Expr::sum(*vars, Expr::atom(Atom { outcomes: a | *vars, ..t.clone() })))
        }
        Move::Condition { vars } => {
            if vars.is_empty() || !vars.is_subset(b) {
                return Err("conditioned variables must be observed".into());
            }
            Ok(Expr::quotient(
                Expr::atom(Atom { outcomes: a | *vars, given: b.minus(*vars), ..t.clone() }),
                Expr::atom(Atom { outcomes: *vars, given: b.minus(*vars), ..t.clone() }),
            ))
        }
        Move::ChainSplit { first } => {
            if first.is_empty() || !first.is_subset(a) || *first == a {
                return Err("split must be a proper nonempty subset of the outcomes".into());
            }
            let rest = a.minus(*first);
            Ok(Expr::product(vec![
                Expr::atom(Atom { domain: t.domain, outcomes: *first, do_set: x, given: b | rest }),
                Expr::atom(Atom { domain: t.domain, outcomes: rest, do_set: x, given: b }),
            ]))
        }
    }
}

fn replace_all(e: &Expr, t: &Atom, with: &Expr) -> Expr {
    e.map_atoms(&mut |a| if a == t { with.clone() } else { Expr::atom(a.clone()) })
}

/// The first atom in pre-order that `keep` rejects.
fn first_atom<'a>(e: &'a Expr, keep: &impl Fn(&Atom) -> bool) -> Option<&'a Atom> {
    let mut found = None;
    e.visit_atoms(&mut |a| {
        if found.is_none() && !keep(a) {
            found = Some(a);
        }
    });
    found
}

impl Derivation {
    /// Applies `moves` in order, starting from `target`; each move rewrites
    /// every occurrence of its term.
    pub fn from_moves(target: Atom, moves: Vec<(Atom, Move)>) -> Result<Derivation, ReplayError> {
        let mut expr = Expr::atom(target.clone());
        let mut steps = Vec::with_capacity(moves.len());
        for (i, (term, mv)) in moves.into_iter().enumerate() {
            let with = expansion(&term, &mv).map_err(|m| ReplayError::InvalidMove(i, m))?;
            if !expr.atoms().contains(&&term) {
                return Err(ReplayError::MissingTerm(i));
            }
            expr = replace_all(&expr, &term, &with);
            steps.push(Step { term, mv, result: expr.clone() });
        }
        Ok(Derivation { target, steps, result: expr })
    }

    /// Re-executes every step: the term must occur, the move must apply,
    /// every rule's graphical precondition must hold in `g` (checked with
    /// [`rule_applicable`]) and the recorded expressions must match. With
    /// `info`, the final expression must also be fully resolved.
    pub fn replay(&self, g: &SemiMarkovGraph, info: Option<&InfoSet>) -> Result<(), ReplayError> {
        let mut expr = Expr::atom(self.target.clone());
        for (i, step) in self.steps.iter().enumerate() {
            if !expr.atoms().contains(&&step.term) {
                return Err(ReplayError::MissingTerm(i));
            }
            let with = expansion(&step.term, &step.mv).map_err(|m| ReplayError::InvalidMove(i, m))?;
            if let Move::Rule { rule, y, z, x, w, .. } = &step.mv {
                if !rule_applicable(g, *rule, *y, *z, *x, *w).unwrap_or(false) {
                    return Err(ReplayError::RuleFails(i));
                }
            }
            expr = replace_all(&expr, &step.term, &with);
            if expr != step.result {
                return Err(ReplayError::ResultMismatch(i));
            }
        }
        if expr != self.result {
            return Err(ReplayError::ResultMismatch(self.steps.len()));
        }
        if let Some(info) = info {
            if let Some(a) = first_atom(&expr, &|a| info.resolve(a).is_some()) {
                return Err(ReplayError::Unresolved(render(&Expr::atom(a.clone()), g, Style::Text)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self, g: &SemiMarkovGraph) -> Value {
        let names = |s: VertexSet| Value::from(g.names_of(s).into_iter().map(String::from).collect::<Vec<_>>());
        let text = |e: &Expr| render(e, g, Style::Text);
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|s| {
                let mut v = json!({
                    "move": s.mv.tag(),
                    "term": text(&Expr::atom(s.term.clone())),
                    "expression": text(&s.result),
                });
                match &s.mv {
                    Move::Rule { rule, y, z, x, w, .. } => {
                        v["rule"] = json!(rule.number());
                        v["Y"] = names(*y);
                        v["Z"] = names(*z);
                        v["X"] = names(*x);
                        v["W"] = names(*w);
                    }
                    Move::Marginalize { vars } | Move::Condition { vars } => v["vars"] = names(*vars),
                    Move::ChainSplit { first } => v["first"] = names(*first),
                }
                v
            })
            .collect();
        json!({
            "target": text(&Expr::atom(self.target.clone())),
            "steps": steps,
            "result": text(&self.result),
        })
    }
}

struct Edge {
    parent: usize,
    mv: Move,
    children: Vec<usize>,
}

fn moves_for(g: &SemiMarkovGraph, t: &Atom) -> Vec<(Move, Vec<Atom>)> {
    let (a, x, b) = (t.outcomes, t.do_set, t.given);
    let absent = g.vertices().minus(a | x | b);
    let mut out = Vec::new();
    let mut rule = |rule: Rule, z: VertexSet, rx: VertexSet, w: VertexSet, to: Atom| {
        if rule_holds(g, rule, a, z, rx, w) {
            let mv = Move::Rule { rule, y: a, z, x: rx, w, to: to.clone() };
            out.push((mv, vec![to]));
        }
    };
    for v in b.iter() {
        let s = VertexSet::singleton(v);
        rule(Rule::One, s, x, b.without(v), Atom::new(0, a, x, b.without(v)));
        rule(Rule::Two, s, x, b.without(v), Atom::new(0, a, x.with(v), b.without(v)));
    }
    for v in x.iter() {
        let s = VertexSet::singleton(v);
        rule(Rule::Two, s, x.without(v), b, Atom::new(0, a, x.without(v), b.with(v)));
        rule(Rule::Three, s, x.without(v), b, Atom::new(0, a, x.without(v), b));
    }
    for v in absent.iter() {
        let s = VertexSet::singleton(v);
        rule(Rule::One, s, x, b, Atom::new(0, a, x, b.with(v)));
        rule(Rule::Three, s, x, b, Atom::new(0, a, x.with(v), b));
    }
    for first in a.subsets().filter(|f| !f.is_empty() && *f != a) {
        let rest = a.minus(first);
        out.push((
            Move::ChainSplit { first },
            vec![Atom::new(0, first, x, b | rest), Atom::new(0, rest, x, b)],
        ));
    }
    for vars in absent.subsets().filter(|c| !c.is_empty()) {
        out.push((Move::Marginalize { vars }, vec![Atom::new(0, a | vars, x, b)]));
    }
    for vars in b.subsets().filter(|c| !c.is_empty()) {
        let rest = b.minus(vars);
        out.push((Move::Condition { vars }, vec![Atom::new(0, a | vars, x, rest), Atom::new(0, vars, x, rest)]));
    }
    out
}

/// Searches for a derivation of `target` from the members of `info` in `g`.
pub fn docalc_search(g: &SemiMarkovGraph, target: &Atom, info: &InfoSet, bounds: SearchBounds) -> SearchOutcome {
    let target = Atom { domain: 0, ..target.clone() };
    let resolved = |a: &Atom| info.resolve(a).is_some();

    // discovery of the reachable term space
    let mut terms: Vec<Atom> = vec![target.clone()];
    let mut index: HashMap<Atom, usize> = HashMap::from([(target.clone(), 0)]);
    let mut edges: Vec<Edge> = Vec::new();
    let mut truncated = false;
    let mut queue = VecDeque::from([0usize]);
    while let Some(t) = queue.pop_front() {
        if resolved(&terms[t]) {
            continue;
        }
        for (mv, kids) in moves_for(g, &terms[t].clone()) {
            let mut ids = Vec::with_capacity(kids.len());
            for k in kids {
                let id = match index.get(&k) {
                    Some(&id) => id,
                    None if terms.len() < bounds.max_queue => {
                        let id = terms.len();
                        index.insert(k.clone(), id);
                        terms.push(k);
                        queue.push_back(id);
                        id
                    }
                    None => {
                        truncated = true;
                        break;
                    }
                };
                ids.push(id);
            }
            if ids.len() == expansion_arity(&mv) {
                edges.push(Edge { parent: t, mv, children: ids });
            }
        }
    }

    // cheapest derivations, bottom-up from resolved terms
    let n = terms.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut remaining: Vec<usize> = Vec::with_capacity(edges.len());
    for (e, edge) in edges.iter().enumerate() {
        for &c in &edge.children {
            rev[c].push(e);
        }
        remaining.push(edge.children.len());
    }
    let mut dist = vec![usize::MAX; n];
    let mut best: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for (t, term) in terms.iter().enumerate() {
        if resolved(term) {
            dist[t] = 0;
            heap.push(Reverse((0usize, t)));
        }
    }
    let mut over_depth = false;
    while let Some(Reverse((c, t))) = heap.pop() {
        if done[t] || c != dist[t] {
            continue;
        }
        done[t] = true;
        if t == 0 {
            break;
        }
        for &e in &rev[t] {
            remaining[e] -= 1;
            if remaining[e] > 0 {
                continue;
            }
            let edge = &edges[e];
            let cand = 1 + edge.children.iter().map(|&k| dist[k]).sum::<usize>();
            if cand > bounds.max_depth {
                over_depth = true;
                continue;
            }
            if !done[edge.parent] && cand < dist[edge.parent] {
                dist[edge.parent] = cand;
                best[edge.parent] = Some(e);
                heap.push(Reverse((cand, edge.parent)));
            }
        }
    }
    if dist[0] == usize::MAX {
        let reason = if truncated {
            Exhaustion::Queue
        } else if over_depth {
            Exhaustion::Depth
        } else {
            Exhaustion::Space
        };
        return SearchOutcome::NotFound { reason, terms_explored: n };
    }

    // unroll: rewrite the leftmost unresolved term with its best move
    let mut moves = Vec::new();
    let mut expr = Expr::atom(target.clone());
    while let Some(a) = first_atom(&expr, &resolved) {
        let a = a.clone();
        let e = best[index[&a]].expect("finite cost implies a best move");
        let mv = edges[e].mv.clone();
        let with = expansion(&a, &mv).expect("generated moves apply");
        expr = replace_all(&expr, &a, &with);
        moves.push((a, mv));
    }
    if expr.atoms().len() > bounds.max_terms {
        return SearchOutcome::NotFound { reason: Exhaustion::Terms, terms_explored: n };
    }
    let d = Derivation::from_moves(target, moves).expect("unrolled moves replay");
    SearchOutcome::Found(d)
}

fn expansion_arity(mv: &Move) -> usize {
    match mv {
        Move::Rule { .. } | Move::Marginalize { .. } => 1,
        Move::Condition { .. } | Move::ChainSplit { .. } => 2,
    }
}
