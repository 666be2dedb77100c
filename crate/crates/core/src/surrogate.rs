//! Surrogate outcome queries: validation, the information set, the rewrite
//! of transport formulas into information-set terms, and the end-to-end
//! identification pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsep::{rule_holds, Rule};
use crate::formula::{canonicalize, marginal, Atom, Expr};
use crate::graph::{GraphError, SemiMarkovGraph};
use crate::transport::{query_transform, trso_traced, TraceStep, TransportError, TransportQuery, TrsoFailure, TrsoOutcome};
use crate::vset::VertexSet;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid surrogate query:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed query JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("term {0} matches no rewrite case")]
    Rewrite(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

/// One violated clause of the query definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index into `surrogates`, or `None` for a clause on `x`/`y`.
    pub pair: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pair {
            Some(i) => write!(f, "pair {i}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Identify `P(y | do(x))` in `graph` from `P(v)` and the experiments
/// `P(w_i | do(z'), ...)` for every pair `(z_i, w_i)` and `z' ⊆ z_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurrogateQuery {
    pub graph: SemiMarkovGraph,
    pub x: VertexSet,
    pub y: VertexSet,
    pub surrogates: Vec<(VertexSet, VertexSet)>,
}

#[derive(Serialize, Deserialize)]
struct QueryJson {
    x: Vec<String>,
    y: Vec<String>,
    surrogates: Vec<PairJson>,
}

#[derive(Serialize, Deserialize)]
struct PairJson {
    z: Vec<String>,
    w: Vec<String>,
}

impl SurrogateQuery {
    pub fn new(graph: SemiMarkovGraph, x: VertexSet, y: VertexSet, surrogates: Vec<(VertexSet, VertexSet)>) -> Self {
        SurrogateQuery { graph, x, y, surrogates }
    }

    /// Builds a query from vertex names.
    pub fn from_names<S: AsRef<str>>(
        graph: SemiMarkovGraph,
        x: &[S],
        y: &[S],
        surrogates: &[(&[S], &[S])],
    ) -> Result<Self, GraphError> {
        let x = graph.set_of(x)?;
        let y = graph.set_of(y)?;
        let pairs = surrogates
            .iter()
            .map(|(z, w)| Ok((graph.set_of(z)?, graph.set_of(w)?)))
            .collect::<Result<_, GraphError>>()?;
        Ok(SurrogateQuery { graph, x, y, surrogates: pairs })
    }

    /// Parses `{"x": [..], "y": [..], "surrogates": [{"z": [..], "w": [..]}]}`.
    pub fn from_json(graph: SemiMarkovGraph, text: &str) -> Result<Self, SurrogateError> {
        let raw: QueryJson = serde_json::from_str(text)?;
        let x = graph.set_of(&raw.x)?;
        let y = graph.set_of(&raw.y)?;
        let mut pairs = Vec::with_capacity(raw.surrogates.len());
        for p in &raw.surrogates {
            pairs.push((graph.set_of(&p.z)?, graph.set_of(&p.w)?));
        }
        Ok(SurrogateQuery { graph, x, y, surrogates: pairs })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let names = |s: VertexSet| self.graph.names_of(s).into_iter().map(String::from).collect::<Vec<_>>();
        let raw = QueryJson {
            x: names(self.x),
            y: names(self.y),
            surrogates: self.surrogates.iter().map(|&(z, w)| PairJson { z: names(z), w: names(w) }).collect(),
        };
        serde_json::to_value(raw).expect("plain data serializes")
    }
}

/// Every violated clause: `x`, `y` nonempty and disjoint, and per pair
/// `W ⊆ De(Z) \ Z`, `Z ⊆ An(W) \ W`, `De(W) ∩ Z = ∅` and
/// `An(w) \ W = An(W) \ W` for each `w ∈ W`.
pub fn validate_query(q: &SurrogateQuery) -> Vec<Violation> {
    let g = &q.graph;
    let all = g.vertices();
    let mut out = Vec::new();
    let mut global = |m: &str| out.push(Violation { pair: None, message: m.to_string() });
    if q.x.is_empty() {
        global("treatment set x is empty");
    }
    if q.y.is_empty() {
        global("outcome set y is empty");
    }
    if !q.x.is_disjoint(q.y) {
        global("treatment and outcome sets overlap");
    }
    if !(q.x | q.y).is_subset(all) {
        global("treatment or outcome references unknown vertices");
    }
    for (i, &(z, w)) in q.surrogates.iter().enumerate() {
        let mut bad = |m: String| out.push(Violation { pair: Some(i), message: m });
        if z.is_empty() || w.is_empty() {
            bad("intervention and outcome sets must be nonempty".into());
            continue;
        }
        if !(z | w).is_subset(all) {
            bad("references unknown vertices".into());
            continue;
        }
        if !z.is_disjoint(w) {
            bad("intervention and outcome sets overlap".into());
            continue;
        }
        let names = |s: VertexSet| g.names_of(s).join(",");
        let not_desc = w.minus(g.descendants(z));
        if !not_desc.is_empty() {
            bad(format!("outcomes {{{}}} are not descendants of the intervention", names(not_desc)));
        }
        let an_w = g.ancestors(w);
        let not_anc = z.minus(an_w);
        if !not_anc.is_empty() {
            bad(format!("interventions {{{}}} are not ancestors of the outcomes", names(not_anc)));
        }
        let clash = g.descendants(w) & z;
        if !clash.is_empty() {
            bad(format!("interventions {{{}}} are descendants of the outcomes", names(clash)));
        }
        let joint = an_w.minus(w);
        for v in w.iter() {
            if g.ancestors(VertexSet::singleton(v)).minus(w) != joint {
                bad(format!("outcome {} does not share the ancestors of the outcome set", g.name(v)));
            }
        }
    }
    out
}

/// The available distributions: `P(v)` first, then for each pair `i` and
/// each `z' ⊆ z_i` (in subset order) the experiment
/// `P(w_i | do(z'), An(w_i)_{G[Z̄']} \ (w_i ∪ z'))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoSet {
    pub members: Vec<Atom>,
}

impl InfoSet {
    /// The member from which `a` is obtained by marginalization and
    /// conditioning, if any: same intervention, `a`'s outcomes inside the
    /// member's, member's conditioning inside `a`'s, and `a`'s extra
    /// conditioning drawn from the member's outcomes.
    pub fn resolve(&self, a: &Atom) -> Option<&Atom> {
        self.members.iter().find(|m| resolvable(a, m))
    }

    pub fn is_member(&self, a: &Atom) -> bool {
        self.members.iter().any(|m| m.do_set == a.do_set && m.outcomes == a.outcomes && m.given == a.given)
    }
}

pub fn resolvable(a: &Atom, m: &Atom) -> bool {
    m.do_set == a.do_set
        && a.outcomes.is_subset(m.outcomes)
        && m.given.is_subset(a.given)
        && a.given.minus(m.given).is_subset(m.outcomes.minus(a.outcomes))
}

pub fn information_set(q: &SurrogateQuery) -> Result<InfoSet, SurrogateError> {
    let violations = validate_query(q);
    if !violations.is_empty() {
        return Err(SurrogateError::Invalid(violations));
    }
    let g = &q.graph;
    let mut members = vec![Atom::obs(g.vertices(), VertexSet::EMPTY)];
    for &(z, w) in &q.surrogates {
        for sub in z.subsets() {
            members.push(member_for(g, sub, w));
        }
    }
    Ok(InfoSet { members })
}

fn member_for(g: &SemiMarkovGraph, z: VertexSet, w: VertexSet) -> Atom {
    let an = g.cut(z, VertexSet::EMPTY).ancestors(w);
    Atom::new(0, w, z, an.minus(w | z))
}

/// Rewrites every source-domain term of a transport formula into terms
/// computable from the information set (domains are kept; see
/// [`strip_domains`]):
///
/// 1. a term already obtainable from an experiment is kept;
/// 2. a term whose outcomes meet `w_i` is split by the chain rule into the
///    experimental conditional of those outcomes, brought to the
///    experiment's conditioning set by rule 1 and written as a quotient of
///    the experiment, times the remainder with its intervention removed by
///    rules 3 and 2; conditioning variables that rule 1 cannot insert are
///    summed out against their observational distribution instead;
/// 3. if that fails because the term conditions on outcomes of `w_i`, the
///    joint of all its `w_i` variables is identified as in 2 and the term
///    is obtained by conditioning;
/// 4. any other term loses its intervention by rules 3 and 2.
pub fn rewrite_transport(e: &Expr, q: &SurrogateQuery, t: &TransportQuery) -> Result<Expr, SurrogateError> {
    let g = &q.graph;
    e.try_map_atoms(&mut |a: &Atom| {
        if a.domain == 0 || a.do_set.is_empty() {
            return Ok(Expr::atom(a.clone()));
        }
        let i = a.domain as usize - 1;
        let (zi, wi) = q.surrogates.get(i).copied().ok_or_else(|| unmatched(a, g))?;
        if !a.do_set.is_subset(zi) || t.experiments.get(i) != Some(&zi) {
            return Err(unmatched(a, g));
        }
        let member = Atom { domain: a.domain, ..member_for(g, a.do_set, wi) };
        if resolvable(a, &member) {
            return Ok(Expr::atom(a.clone()));
        }
        chain_form(g, a, &member, wi)
            .or_else(|| joint_form(g, a, &member, wi))
            .ok_or_else(|| unmatched(a, g))
    })
}

/// `P(c | do(z), d) = P(w* | do(z), d, rest) P(rest | do(z), d)` with
/// `w* = c ∩ W_i`; the first factor comes from the experiment conditioned
/// on, or marginalized over, the other outcomes `W_i \ W*`.
fn chain_form(g: &SemiMarkovGraph, a: &Atom, member: &Atom, wi: VertexSet) -> Option<Expr> {
    let z = a.do_set;
    let w_star = a.outcomes & wi;
    let rest = a.outcomes.minus(w_star);
    let mut factors = Vec::with_capacity(2);
    if !w_star.is_empty() {
        let e_set = a.given | rest;
        let member_expr = Expr::atom(member.clone());
        let others = wi.minus(w_star);
        let conditioned = Expr::quotient(member_expr.clone(), marginal(&member_expr, w_star).ok()?);
        let marginalized = marginal(&member_expr, others).ok()?;
        let forms = [(member.given | others, conditioned), (member.given, marginalized)];
        let factor = forms
            .into_iter()
            .find_map(|(f_set, conditional)| adjust_conditioning(g, w_star, z, e_set, f_set, conditional))?;
        factors.push(factor);
    }
    if !rest.is_empty() {
        factors.push(Expr::atom(observational(g, rest, z, a.given)?));
    }
    Some(Expr::product(factors))
}

/// For terms conditioned on some of the outcomes `W_i`: the joint of all
/// outcomes `J = c ∪ (d ∩ W_i)` given the other conditioning variables is
/// identified by [`chain_form`]'s steps, and the term is its conditional.
fn joint_form(g: &SemiMarkovGraph, a: &Atom, member: &Atom, wi: VertexSet) -> Option<Expr> {
    let z = a.do_set;
    let b_w = a.given & wi;
    let b_o = a.given.minus(wi);
    let j = a.outcomes | b_w;
    let (j_w, j_o) = (j & wi, j.minus(wi));
    let cond = marginal(&Expr::atom(member.clone()), wi.minus(j_w)).ok()?;
    let mut factors = vec![adjust_conditioning(g, j_w, z, b_o | j_o, member.given, cond)?];
    if !j_o.is_empty() {
        factors.push(Expr::atom(observational(g, j_o, z, b_o)?));
    }
    let joint = Expr::product(factors);
    if b_w.is_empty() {
        return Some(joint);
    }
    let den = marginal(&joint, a.outcomes).ok()?;
    Some(Expr::quotient(joint, den))
}

/// Turns `conditional = P(w* | do(z), F)` into `P(w* | do(z), E)`: rule 1
/// deletes `E \ F`, and `F \ E` is either inserted by rule 1 or averaged
/// over with its observational distribution `P(F \ E | E)` (rule 3).
fn adjust_conditioning(
    g: &SemiMarkovGraph,
    w_star: VertexSet,
    z: VertexSet,
    e_set: VertexSet,
    f_set: VertexSet,
    conditional: Expr,
) -> Option<Expr> {
    let insert = f_set.minus(e_set);
    let delete = e_set.minus(f_set);
    if !rule_holds(g, Rule::One, w_star, delete, z, f_set) {
        return None;
    }
    if rule_holds(g, Rule::One, w_star, insert, z, e_set) {
        return Some(conditional);
    }
    let weight = Expr::atom(observational(g, insert, z, e_set)?);
    Some(Expr::sum(insert, Expr::product(vec![conditional, weight])))
}

/// `P(y | do(z), w)` without its intervention: each intervened vertex is
/// deleted by rule 3 or, failing that, exchanged for an observation by
/// rule 2, greedily in vertex order.
fn observational(g: &SemiMarkovGraph, y: VertexSet, z: VertexSet, w: VertexSet) -> Option<Atom> {
    let (mut z, mut w) = (z, w);
    while !z.is_empty() {
        if let Some(v) = z.iter().find(|&v| rule_holds(g, Rule::Three, y, VertexSet::singleton(v), z.without(v), w)) {
            z = z.without(v);
        } else {
            let v = z.iter().find(|&v| rule_holds(g, Rule::Two, y, VertexSet::singleton(v), z.without(v), w))?;
            z = z.without(v);
            w = w.with(v);
        }
    }
    Some(Atom::new(0, y, VertexSet::EMPTY, w))
}

fn unmatched(a: &Atom, g: &SemiMarkovGraph) -> SurrogateError {
    SurrogateError::Rewrite(crate::formula::render(&Expr::atom(a.clone()), g, crate::formula::Style::Text))
}

/// Sets every term's domain to the target domain.
pub fn strip_domains(e: &Expr) -> Expr {
    e.map_atoms(&mut |a| Expr::atom(Atom { domain: 0, ..a.clone() }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurrogateOutcome {
    Identified(Expr),
    /// The recursion failed; the effect may still be identifiable.
    NotDetermined(TrsoFailure),
}

impl SurrogateOutcome {
    pub fn formula(&self) -> Option<&Expr> {
        match self {
            SurrogateOutcome::Identified(e) => Some(e),
            SurrogateOutcome::NotDetermined(_) => None,
        }
    }
}

/// Every intermediate product of [`surrogate_identify`].
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub transport: TransportQuery,
    pub info: InfoSet,
    pub trace: Vec<TraceStep>,
    /// The recursion's formula with domain indices, before rewriting.
    pub transport_formula: Option<Expr>,
    pub outcome: SurrogateOutcome,
}

/// validate → transform → TRSO → rewrite → strip domains → canonicalize.
pub fn surrogate_identify(q: &SurrogateQuery) -> Result<SurrogateOutcome, SurrogateError> {
    Ok(surrogate_pipeline(q, false)?.outcome)
}

pub fn surrogate_pipeline(q: &SurrogateQuery, with_trace: bool) -> Result<PipelineReport, SurrogateError> {
    let info = information_set(q)?;
    let t = query_transform(q);
    let mut trace = with_trace.then(Vec::new);
    let outcome = trso_traced(&t, &mut trace)?;
    let (transport_formula, outcome) = match outcome {
        TrsoOutcome::Failed(f) => (None, SurrogateOutcome::NotDetermined(f)),
        TrsoOutcome::Identified(raw) => {
            let rewritten = rewrite_transport(&raw, q, &t)?;
            let e = canonicalize(&strip_domains(&rewritten));
            (Some(raw), SurrogateOutcome::Identified(e))
        }
    };
    Ok(PipelineReport { transport: t, info, trace: trace.unwrap_or_default(), transport_formula, outcome })
}
