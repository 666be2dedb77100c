//! Semi-Markovian graphs: a directed acyclic part over observed vertices plus
//! bidirected edges standing for latent confounders.
//!
//! Vertices are addressed by dense ids into a fixed universe of names. Induced
//! subgraphs and edge cuts keep the universe (and the global topological order)
//! of the graph they were derived from, so vertex sets and order prefixes stay
//! comparable across the whole recursion of the identification algorithms.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::vset::VertexSet;

/// Upper bound on the universe size; vertex sets are 64-bit masks.
pub const MAX_VERTICES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("directed part contains a cycle through `{0}`")]
    Cycle(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge {0}")]
    DuplicateEdge(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex set references ids outside the graph")]
    ForeignVertices,
    #[error("graph has more than {MAX_VERTICES} vertices")]
    TooLarge,
}

/// How ties between simultaneously available vertices are broken when the
/// global topological order is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Kahn's algorithm with a FIFO queue seeded in declaration order and
    /// children released in edge-declaration order.
    #[default]
    Declaration,
    /// Smallest vertex name first.
    Lexicographic,
}

/// Which relatives to collect in [`SemiMarkovGraph::relatives`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
}

/// A permutation of the vertices of a graph in which every vertex precedes its
/// directed descendants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoOrder {
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl TopoOrder {
    fn from_order(order: Vec<usize>, universe: usize) -> Self {
        let mut rank = vec![usize::MAX; universe];
        for (i, &v) in order.iter().enumerate() {
            rank[v] = i;
        }
        TopoOrder { order, rank }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn rank(&self, v: usize) -> Option<usize> {
        self.rank.get(v).copied().filter(|&r| r != usize::MAX)
    }

    /// Vertices strictly before `v` in this order.
    pub fn before(&self, v: usize) -> VertexSet {
        match self.rank(v) {
            Some(r) => self.order[..r].iter().copied().collect(),
            None => VertexSet::EMPTY,
        }
    }

    /// Vertices up to and including `v`.
    pub fn up_to(&self, v: usize) -> VertexSet {
        self.before(v).with(v)
    }

    /// Members of `set` listed in this order.
    pub fn sorted(&self, set: VertexSet) -> Vec<usize> {
        self.order.iter().copied().filter(|&v| set.contains(v)).collect()
    }

    pub fn restrict(&self, set: VertexSet) -> TopoOrder {
        TopoOrder::from_order(self.sorted(set), self.rank.len())
    }
}

#[derive(Debug)]
struct Universe {
    names: Vec<String>,
    index: HashMap<String, usize>,
    order: TopoOrder,
}

/// An acyclic directed graph plus bidirected edges over a fixed vertex universe.
#[derive(Clone)]
pub struct SemiMarkovGraph {
    universe: Arc<Universe>,
    vertices: VertexSet,
    parents: Vec<VertexSet>,
    children: Vec<VertexSet>,
    spouses: Vec<VertexSet>,
    /// Directed edges in declaration order, used for display and the
    /// declaration tie-break.
    edge_order: Arc<Vec<(usize, usize)>>,
}

impl PartialEq for SemiMarkovGraph {
    fn eq(&self, other: &Self) -> bool {
        self.universe.names == other.universe.names
            && self.vertices == other.vertices
            && self.parents == other.parents
            && self.spouses == other.spouses
    }
}

impl Eq for SemiMarkovGraph {}

impl fmt::Debug for SemiMarkovGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SemiMarkovGraph({})", self.to_dsl())
    }
}

impl SemiMarkovGraph {
    /// Builds a graph from vertex names and edge lists given by index.
    pub fn new(
        names: Vec<String>,
        directed: &[(usize, usize)],
        bidirected: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        Self::with_tie_break(names, directed, bidirected, TieBreak::default())
    }

    pub fn with_tie_break(
        names: Vec<String>,
        directed: &[(usize, usize)],
        bidirected: &[(usize, usize)],
        tie_break: TieBreak,
    ) -> Result<Self, GraphError> {
        let n = names.len();
        if n > MAX_VERTICES {
            return Err(GraphError::TooLarge);
        }
        let mut index = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(GraphError::DuplicateEdge(format!("vertex `{name}` declared twice")));
            }
        }
        let mut parents = vec![VertexSet::EMPTY; n];
        let mut children = vec![VertexSet::EMPTY; n];
        let mut spouses = vec![VertexSet::EMPTY; n];
        for &(a, b) in directed {
            if a >= n || b >= n {
                return Err(GraphError::ForeignVertices);
            }
            if a == b {
                return Err(GraphError::SelfLoop(names[a].clone()));
            }
            if parents[b].contains(a) {
                return Err(GraphError::DuplicateEdge(format!("{} -> {}", names[a], names[b])));
            }
            parents[b].insert(a);
            children[a].insert(b);
        }
        for &(a, b) in bidirected {
            if a >= n || b >= n {
                return Err(GraphError::ForeignVertices);
            }
            if a == b {
                return Err(GraphError::SelfLoop(names[a].clone()));
            }
            if spouses[a].contains(b) {
                return Err(GraphError::DuplicateEdge(format!("{} <-> {}", names[a], names[b])));
            }
            spouses[a].insert(b);
            spouses[b].insert(a);
        }
        let order = topo_sort(&names, &parents, directed, tie_break)?;
        let universe = Universe { names, index, order: TopoOrder::from_order(order, n) };
        Ok(SemiMarkovGraph {
            universe: Arc::new(universe),
            vertices: VertexSet::full(n),
            parents,
            children,
            spouses,
            edge_order: Arc::new(directed.to_vec()),
        })
    }

    /// Parses the edge-list DSL: statements `a -> b`, `a <-> b` or a bare
    /// vertex name (for isolated vertices) separated by commas or newlines;
    /// `#` starts a comment running to the end of the line.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        Self::parse_with(text, TieBreak::default())
    }

    pub fn parse_with(text: &str, tie_break: TieBreak) -> Result<Self, GraphError> {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut directed = Vec::new();
        let mut bidirected: Vec<(usize, usize)> = Vec::new();
        let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let mut offset = 0;
            for stmt in line.split(',') {
                let col = offset + stmt.len() - stmt.trim_start().len() + 1;
                offset += stmt.len() + 1;
                let stmt = stmt.trim();
                if stmt.is_empty() {
                    continue;
                }
                let err = |msg: String| GraphError::Parse { line: lineno + 1, col, msg };
                let (lhs, rhs, bi) = if let Some((l, r)) = stmt.split_once("<->") {
                    (l, r, true)
                } else if let Some((l, r)) = stmt.split_once("->") {
                    (l, r, false)
                } else if is_identifier(stmt) {
                    intern(stmt, &mut names);
                    continue;
                } else {
                    return Err(err(format!("expected `a -> b`, `a <-> b` or a vertex name, found `{stmt}`")));
                };
                let (lhs, rhs) = (lhs.trim(), rhs.trim());
                for name in [lhs, rhs] {
                    if !is_identifier(name) {
                        return Err(err(format!("malformed vertex name `{name}`")));
                    }
                }
                if lhs == rhs {
                    return Err(GraphError::SelfLoop(lhs.to_string()));
                }
                let a = intern(lhs, &mut names);
                let b = intern(rhs, &mut names);
                if bi {
                    let key = (a.min(b), a.max(b));
                    if bidirected.contains(&key) {
                        return Err(GraphError::DuplicateEdge(format!("{lhs} <-> {rhs}")));
                    }
                    bidirected.push(key);
                } else {
                    directed.push((a, b));
                }
            }
        }
        Self::with_tie_break(names, &directed, &bidirected, tie_break)
    }

    pub fn universe_size(&self) -> usize {
        self.universe.names.len()
    }

    pub fn vertices(&self) -> VertexSet {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.universe.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.universe.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.universe.index.get(name).copied()
    }

    /// Resolves a list of names into a vertex set of this graph.
    pub fn set_of<S: AsRef<str>>(&self, names: &[S]) -> Result<VertexSet, GraphError> {
        let mut out = VertexSet::EMPTY;
        for n in names {
            let n = n.as_ref();
            match self.id(n) {
                Some(v) if self.vertices.contains(v) => out.insert(v),
                _ => return Err(GraphError::UnknownVertex(n.to_string())),
            }
        }
        Ok(out)
    }

    pub fn names_of(&self, set: VertexSet) -> Vec<&str> {
        self.order().sorted(set).into_iter().map(|v| self.name(v)).collect()
    }

    pub fn parents_of(&self, v: usize) -> VertexSet {
        self.parents[v]
    }

    pub fn children_of(&self, v: usize) -> VertexSet {
        self.children[v]
    }

    pub fn spouses_of(&self, v: usize) -> VertexSet {
        self.spouses[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents.get(to).is_some_and(|p| p.contains(from))
    }

    pub fn has_bidirected(&self, a: usize, b: usize) -> bool {
        self.spouses.get(a).is_some_and(|s| s.contains(b))
    }

    /// Directed edges, sorted by (tail, head).
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for b in self.vertices.iter() {
            for a in self.parents[b].iter() {
                out.push((a, b));
            }
        }
        out.sort_unstable();
        out
    }

    /// Bidirected edges with the lower id first.
    pub fn bidirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in self.vertices.iter() {
            for b in self.spouses[a].iter().filter(|&b| b > a) {
                out.push((a, b));
            }
        }
        out
    }

    fn check(&self, set: VertexSet) -> Result<(), GraphError> {
        if set.is_subset(self.vertices) {
            Ok(())
        } else {
            let stray = set.minus(self.vertices).first().unwrap_or(0);
            Err(GraphError::UnknownVertex(
                self.universe.names.get(stray).cloned().unwrap_or_else(|| format!("#{stray}")),
            ))
        }
    }

    /// Inclusive relatives of `set`: the set itself is always part of the result.
    pub fn relatives(&self, set: VertexSet, kind: Relation) -> Result<VertexSet, GraphError> {
        self.check(set)?;
        Ok(match kind {
            Relation::Parents => set.iter().fold(set, |acc, v| acc | self.parents[v]),
            Relation::Children => set.iter().fold(set, |acc, v| acc | self.children[v]),
            Relation::Ancestors => self.closure(set, &self.parents),
            Relation::Descendants => self.closure(set, &self.children),
        })
    }

    pub fn ancestors(&self, set: VertexSet) -> VertexSet {
        self.closure(set & self.vertices, &self.parents)
    }

    pub fn descendants(&self, set: VertexSet) -> VertexSet {
        self.closure(set & self.vertices, &self.children)
    }

    fn closure(&self, set: VertexSet, step: &[VertexSet]) -> VertexSet {
        let mut seen = set;
        let mut frontier = set;
        while !frontier.is_empty() {
            let next = frontier.iter().fold(VertexSet::EMPTY, |acc, v| acc | step[v]);
            frontier = next.minus(seen);
            seen |= next;
        }
        seen
    }

    /// `G[W]`: keeps every directed and bidirected edge with both ends in `W`.
    pub fn induced_subgraph(&self, set: VertexSet) -> Result<Self, GraphError> {
        self.check(set)?;
        Ok(self.restrict(set))
    }

    pub(crate) fn restrict(&self, set: VertexSet) -> Self {
        let keep = set & self.vertices;
        let mut g = self.clone();
        g.vertices = keep;
        for v in 0..self.universe_size() {
            if keep.contains(v) {
                g.parents[v] &= keep;
                g.children[v] &= keep;
                g.spouses[v] &= keep;
            } else {
                g.parents[v] = VertexSet::EMPTY;
                g.children[v] = VertexSet::EMPTY;
                g.spouses[v] = VertexSet::EMPTY;
            }
        }
        g
    }

    /// `G[overline, underline]`: removes edges into `overline` (bidirected
    /// edges count as incoming on both ends) and directed edges out of
    /// `underline`.
    pub fn edge_cut(&self, overline: VertexSet, underline: VertexSet) -> Result<Self, GraphError> {
        self.check(overline)?;
        self.check(underline)?;
        Ok(self.cut(overline, underline))
    }

    pub(crate) fn cut(&self, overline: VertexSet, underline: VertexSet) -> Self {
        let mut g = self.clone();
        for v in overline.iter() {
            for p in g.parents[v].iter() {
                g.children[p].remove(v);
            }
            g.parents[v] = VertexSet::EMPTY;
            for s in g.spouses[v].iter() {
                g.spouses[s].remove(v);
            }
            g.spouses[v] = VertexSet::EMPTY;
        }
        for u in underline.iter() {
            for c in g.children[u].iter() {
                g.parents[c].remove(u);
            }
            g.children[u] = VertexSet::EMPTY;
        }
        g
    }

    /// Maximal c-components, ordered by their smallest member id.
    pub fn c_components(&self) -> Vec<VertexSet> {
        let mut left = self.vertices;
        let mut out = Vec::new();
        while let Some(start) = left.first() {
            let comp = self.closure(VertexSet::singleton(start), &self.spouses);
            left = left.minus(comp);
            out.push(comp);
        }
        out
    }

    /// The c-component containing `v`.
    pub fn c_component_of(&self, v: usize) -> VertexSet {
        self.closure(VertexSet::singleton(v) & self.vertices, &self.spouses)
    }

    /// The global order of the universe restricted to the current vertices.
    pub fn topological_order(&self) -> TopoOrder {
        self.universe.order.restrict(self.vertices)
    }

    /// The global order over the whole universe this graph was derived from.
    pub fn order(&self) -> &TopoOrder {
        &self.universe.order
    }

    /// Renders the graph back into the DSL.
    pub fn to_dsl(&self) -> String {
        let mut parts = Vec::new();
        for &(a, b) in self.edge_order.iter() {
            if self.has_edge(a, b) {
                parts.push(format!("{} -> {}", self.name(a), self.name(b)));
            }
        }
        for (a, b) in self.bidirected_edges() {
            parts.push(format!("{} <-> {}", self.name(a), self.name(b)));
        }
        for v in self.vertices.iter() {
            if self.parents[v].is_empty() && self.children[v].is_empty() && self.spouses[v].is_empty() {
                parts.push(self.name(v).to_string());
            }
        }
        parts.join(", ")
    }

    /// A graph with the same edges but a freshly computed order over the
    /// current vertex set.
    pub fn rebuilt(&self, tie_break: TieBreak) -> Result<Self, GraphError> {
        let keep: Vec<usize> = (0..self.universe_size()).filter(|&v| self.vertices.contains(v)).collect();
        let mut remap = vec![usize::MAX; self.universe_size()];
        for (i, &v) in keep.iter().enumerate() {
            remap[v] = i;
        }
        let names = keep.iter().map(|&v| self.name(v).to_string()).collect();
        let directed: Vec<_> = self
            .edge_order
            .iter()
            .filter(|&&(a, b)| self.has_edge(a, b))
            .map(|&(a, b)| (remap[a], remap[b]))
            .collect();
        let bidirected: Vec<_> =
            self.bidirected_edges().into_iter().map(|(a, b)| (remap[a], remap[b])).collect();
        Self::with_tie_break(names, &directed, &bidirected, tie_break)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn topo_sort(
    names: &[String],
    parents: &[VertexSet],
    edges: &[(usize, usize)],
    tie_break: TieBreak,
) -> Result<Vec<usize>, GraphError> {
    let n = names.len();
    let mut indegree: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut out_edges = vec![Vec::new(); n];
    for &(a, b) in edges {
        out_edges[a].push(b);
    }
    let mut order = Vec::with_capacity(n);
    match tie_break {
        TieBreak::Declaration => {
            let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &c in &out_edges[v] {
                    indegree[c] -= 1;
                    if indegree[c] == 0 {
                        queue.push_back(c);
                    }
                }
            }
        }
        TieBreak::Lexicographic => {
            let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
            while !ready.is_empty() {
                let (pos, _) = ready
                    .iter()
                    .enumerate()
                    .min_by(|a, b| names[*a.1].cmp(&names[*b.1]))
                    .expect("nonempty");
                let v = ready.swap_remove(pos);
                order.push(v);
                for &c in &out_edges[v] {
                    indegree[c] -= 1;
                    if indegree[c] == 0 {
                        ready.push(c);
                    }
                }
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&v| indegree[v] > 0).unwrap_or(0);
        return Err(GraphError::Cycle(names[stuck].clone()));
    }
    Ok(order)
}
