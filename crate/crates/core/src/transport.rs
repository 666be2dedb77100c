//! Transportability diagrams, the surrogate-to-transport query transformation
//! and the TRSO recursion.
//!
//! Domain indices: `0` is the target domain, diagram `k` of a
//! [`TransportQuery`] (0-based) is source domain `k + 1`. Atoms produced by
//! [`trso`] carry these indices in [`Atom::domain`].

use std::fmt;

use thiserror::Error;

use crate::dsep::separated;
use crate::formula::{c_factor, marginal, Atom, Expr, FormulaError};
use crate::graph::{GraphError, SemiMarkovGraph};
use crate::surrogate::SurrogateQuery;
use crate::vset::VertexSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("experiment list has {experiments} entries for {diagrams} diagrams")]
    Misaligned { experiments: usize, diagrams: usize },
    #[error("treatment and outcome sets must be disjoint and outcome nonempty")]
    BadQuery,
    #[error("vertex sets reference vertices outside the target graph")]
    OutOfScope,
    #[error("recursion depth exceeded {0}")]
    DepthExceeded(usize),
    #[error("unexpected local distribution at an experiment activation: {0}")]
    Distribution(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A source-domain diagram: the target graph plus one transportability node
/// `T_v -> v` for every `v` in `t_targets`. The nodes stay implicit except
/// inside [`TransportDiagram::materialize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportDiagram {
    pub base: SemiMarkovGraph,
    pub t_targets: VertexSet,
}

impl TransportDiagram {
    /// The diagram as an ordinary graph restricted to `scope`, with explicit
    /// transportability nodes for the targets inside the scope. Returns the
    /// graph and the ids of the added nodes; original vertices keep their ids.
    pub fn materialize(&self, scope: VertexSet) -> Result<(SemiMarkovGraph, VertexSet), GraphError> {
        materialize(&self.base.restrict(scope), self.t_targets & scope)
    }
}

pub(crate) fn materialize(
    g: &SemiMarkovGraph,
    targets: VertexSet,
) -> Result<(SemiMarkovGraph, VertexSet), GraphError> {
    let n = g.universe_size();
    let mut names: Vec<String> = g.names().to_vec();
    let mut directed = g.directed_edges();
    let mut t_ids = VertexSet::EMPTY;
    for v in targets.iter() {
        let id = names.len();
        names.push(format!("T[{}]", g.name(v)));
        directed.push((id, v));
        t_ids.insert(id);
    }
    let full = SemiMarkovGraph::new(names, &directed, &g.bidirected_edges())?;
    debug_assert!(t_ids.iter().all(|t| t >= n));
    Ok((full.restrict(g.vertices() | t_ids), t_ids))
}

/// A transportability query: identify `P*(y | do(x))` in `target` from the
/// observational target distribution, target experiments, and experiments
/// `experiments[k]` in source domain `k + 1` with diagram `diagrams[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportQuery {
    pub x: VertexSet,
    pub y: VertexSet,
    pub target: SemiMarkovGraph,
    pub diagrams: Vec<TransportDiagram>,
    pub experiments: Vec<VertexSet>,
    pub target_experiments: VertexSet,
}

/// A structural failure of the recursion with the offending component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrsoFailure {
    pub line: u8,
    pub witness: VertexSet,
}

impl fmt::Display for TrsoFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FAIL at line {} on component {:?}", self.line, self.witness)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrsoOutcome {
    Identified(Expr),
    Failed(TrsoFailure),
}

impl TrsoOutcome {
    pub fn is_identified(&self) -> bool {
        matches!(self, TrsoOutcome::Identified(_))
    }

    pub fn formula(&self) -> Option<&Expr> {
        match self {
            TrsoOutcome::Identified(e) => Some(e),
            TrsoOutcome::Failed(_) => None,
        }
    }
}

/// One visited line of the recursion, for `--trace` output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub depth: usize,
    pub line: u8,
    pub domain: u32,
    pub y: VertexSet,
    pub x: VertexSet,
    pub scope: VertexSet,
}

impl TraceStep {
    pub fn describe(&self, g: &SemiMarkovGraph) -> String {
        let list = |s: VertexSet| g.order().sorted(s).into_iter().map(|v| g.name(v)).collect::<Vec<_>>().join(",");
        format!(
            "{}line {:>2}  domain {}  y={{{}}} x={{{}}} scope={{{}}}",
            "  ".repeat(self.depth),
            self.line,
            self.domain,
            list(self.y),
            list(self.x),
            list(self.scope)
        )
    }
}

/// Builds the transportability query of a surrogate outcome query: one
/// source domain per pair `(Z_i, W_i)`, with transportability nodes on
/// `(De(Z_i) \ W_i) ∪ (C_{W_i} \ An(W_i)_{G[Z̄_i]})`, where `C_{W_i}` is the
/// union of the c-components meeting `W_i`.
pub fn query_transform(q: &SurrogateQuery) -> TransportQuery {
    let g = &q.graph;
    let comps = g.c_components();
    let mut diagrams = Vec::with_capacity(q.surrogates.len());
    let mut experiments = Vec::with_capacity(q.surrogates.len());
    for &(z, w) in &q.surrogates {
        let de = g.descendants(z).minus(w);
        let c_w = comps.iter().filter(|c| !c.is_disjoint(w)).fold(VertexSet::EMPTY, |a, &c| a | c);
        let an_w = g.cut(z, VertexSet::EMPTY).ancestors(w);
        diagrams.push(TransportDiagram { base: g.clone(), t_targets: de | c_w.minus(an_w) });
        experiments.push(z);
    }
    TransportQuery {
        x: q.x,
        y: q.y,
        target: g.clone(),
        diagrams,
        experiments,
        target_experiments: VertexSet::EMPTY,
    }
}

/// Runs the recursion from the top: `TRSO(y, x, P*(v), ∅, 0, G)`.
pub fn trso(q: &TransportQuery) -> Result<TrsoOutcome, TransportError> {
    trso_traced(q, &mut None)
}

/// As [`trso`], additionally recording each visited line when `trace` is
/// `Some`.
pub fn trso_traced(q: &TransportQuery, trace: &mut Option<Vec<TraceStep>>) -> Result<TrsoOutcome, TransportError> {
    if q.experiments.len() != q.diagrams.len() {
        return Err(TransportError::Misaligned { experiments: q.experiments.len(), diagrams: q.diagrams.len() });
    }
    let all = q.target.vertices();
    if q.y.is_empty() || !q.x.is_disjoint(q.y) {
        return Err(TransportError::BadQuery);
    }
    if !(q.x | q.y | q.target_experiments).is_subset(all)
        || q.experiments.iter().any(|z| !z.is_subset(all))
        || q.diagrams.iter().any(|d| !d.t_targets.is_subset(all) || d.base.vertices() != all)
    {
        return Err(TransportError::OutOfScope);
    }
    let mut run = Run { q, trace, limit: depth_limit(all.len()) };
    let p = Expr::atom(Atom::obs(all, VertexSet::EMPTY));
    run.call(q.y, q.x, p, VertexSet::EMPTY, 0, &q.target, true, 0)
}

/// Classical identification from `P(v)` alone: the recursion with no
/// source domains and no experiments.
pub fn identify_plain(g: &SemiMarkovGraph, x: VertexSet, y: VertexSet) -> Result<TrsoOutcome, TransportError> {
    let q = TransportQuery {
        x,
        y,
        target: g.clone(),
        diagrams: Vec::new(),
        experiments: Vec::new(),
        target_experiments: VertexSet::EMPTY,
    };
    trso(&q)
}

/// Depth bound of the recursion for a graph with `n` vertices.
pub fn depth_limit(n: usize) -> usize {
    2 * n + 2
}

struct Run<'a, 'b> {
    q: &'a TransportQuery,
    trace: &'b mut Option<Vec<TraceStep>>,
    limit: usize,
}

impl Run<'_, '_> {
    fn note(&mut self, depth: usize, line: u8, domain: u32, y: VertexSet, x: VertexSet, d: &SemiMarkovGraph) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceStep { depth, line, domain, y, x, scope: d.vertices() });
        }
    }

    fn experiments(&self, domain: usize) -> VertexSet {
        if domain == 0 {
            self.q.target_experiments
        } else {
            self.q.experiments[domain - 1]
        }
    }

    fn t_targets(&self, domain: u32) -> VertexSet {
        match domain {
            0 => VertexSet::EMPTY,
            s => self.q.diagrams[s as usize - 1].t_targets,
        }
    }

    /// `TRSO(y, x, P, I, S, D, 𝒵)`; `enabled` is false once 𝒵 has been
    /// replaced by the empty collection.
    #[allow(clippy::too_many_arguments)]
    fn call(
        &mut self,
        y: VertexSet,
        x: VertexSet,
        p: Expr,
        active: VertexSet,
        domain: u32,
        d: &SemiMarkovGraph,
        enabled: bool,
        depth: usize,
    ) -> Result<TrsoOutcome, TransportError> {
        if depth > self.limit {
            return Err(TransportError::DepthExceeded(self.limit));
        }
        let v = d.vertices();
        let order = d.order();

        // line 1
        if x.is_empty() {
            self.note(depth, 1, domain, y, x, d);
            return Ok(TrsoOutcome::Identified(marginal(&p, v.minus(y))?));
        }

        // line 2
        let an_y = d.ancestors(y);
        if an_y != v {
            self.note(depth, 2, domain, y, x, d);
            let p = marginal(&p, v.minus(an_y))?;
            return self.call(y, x & an_y, p, active, domain, &d.restrict(an_y), enabled, depth + 1);
        }

        // line 3
        let w = v.minus(x).minus(d.cut(x, VertexSet::EMPTY).ancestors(y));
        if !w.is_empty() {
            self.note(depth, 3, domain, y, x, d);
            return self.call(y, x | w, p, active, domain, d, enabled, depth + 1);
        }

        // line 4
        let rest = d.restrict(v.minus(x));
        let blocks = rest.c_components();
        if blocks.len() > 1 {
            self.note(depth, 4, domain, y, x, d);
            let mut factors = Vec::with_capacity(blocks.len());
            for &c in &blocks {
                match self.call(c, v.minus(c), p.clone(), active, domain, d, enabled, depth + 1)? {
                    TrsoOutcome::Identified(e) => factors.push(e),
                    failed => return Ok(failed),
                }
            }
            return Ok(TrsoOutcome::Identified(Expr::sum(v.minus(x | y), Expr::product(factors))));
        }
        let c = blocks.first().copied().unwrap_or(VertexSet::EMPTY);

        // lines 5-7: prefer experiments
        if active.is_empty() && enabled {
            for i in 0..=self.q.diagrams.len() {
                let zx = self.experiments(i) & x;
                if zx.is_empty() {
                    continue;
                }
                let t = if i == 0 { VertexSet::EMPTY } else { self.q.diagrams[i - 1].t_targets & v };
                if !t.is_empty() {
                    let (dt, t_ids) = materialize(d, t)?;
                    if !separated(&dt.cut(x, VertexSet::EMPTY), t_ids, y, x) {
                        continue;
                    }
                }
                self.note(depth, 6, i as u32, y, x, d);
                let activated = activate(&p, v.minus(zx), zx, i as u32)?;
                let sub = d.restrict(v.minus(zx));
                if let TrsoOutcome::Identified(e) =
                    self.call(y, x.minus(zx), activated, zx, i as u32, &sub, enabled, depth + 1)?
                {
                    self.note(depth, 7, i as u32, y, x, d);
                    return Ok(TrsoOutcome::Identified(e));
                }
            }
        }

        // line 8
        let comps = d.c_components();
        if comps.len() > 1 {
            // line 9
            if comps.contains(&c) {
                self.note(depth, 9, domain, y, x, d);
                let f = c_factor(&p, v, c, order)?;
                return Ok(TrsoOutcome::Identified(marginal(&f, c.minus(y))?));
            }
            // line 10
            if let Some(&c2) = comps.iter().find(|&&k| c.is_subset(k)) {
                self.note(depth, 10, domain, y, x, d);
                let enabled = if active.is_empty() {
                    false
                } else if !(self.t_targets(domain) & c2).is_empty() {
                    return Ok(TrsoOutcome::Failed(TrsoFailure { line: 10, witness: c2 }));
                } else {
                    enabled
                };
                let f = c_factor(&p, v, c2, order)?;
                return self.call(y, x & c2, f, active, domain, &d.restrict(c2), enabled, depth + 1);
            }
        }

        // line 11
        self.note(depth, 11, domain, y, x, d);
        Ok(TrsoOutcome::Failed(TrsoFailure { line: 11, witness: c }))
    }
}

/// The experimental distribution `P^(i)(scope | do(z))` replacing the local
/// observational distribution when an experiment is activated.
fn activate(p: &Expr, scope: VertexSet, z: VertexSet, domain: u32) -> Result<Expr, TransportError> {
    match p {
        Expr::Atom(a) if a.do_set.is_empty() && a.given.is_empty() && a.domain == 0 => {
            Ok(Expr::atom(Atom::new(domain, scope, z, VertexSet::EMPTY)))
        }
        other => Err(TransportError::Distribution(format!("{other:?}"))),
    }
}
