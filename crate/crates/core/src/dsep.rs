//! d-separation in semi-Markovian graphs and the preconditions of the three
//! do-calculus rules.
//!
//! Each bidirected edge `a <-> b` behaves like a latent parent `a <- U -> b`.
//! The reachability search below walks the observed vertices only: moving
//! "up" out of a vertex may pass through such a latent and arrive at the
//! spouse from above.

use thiserror::Error;

use crate::graph::SemiMarkovGraph;
use crate::vset::VertexSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DsepError {
    #[error("argument sets overlap: {0}")]
    Overlap(&'static str),
    #[error("argument sets reference vertices outside the graph")]
    Foreign,
}

/// Do-calculus rule numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// Insertion and deletion of observations.
    One = 1,
    /// Exchange of actions and observations.
    Two = 2,
    /// Insertion and deletion of actions.
    Three = 3,
}

impl Rule {
    pub fn from_number(n: u8) -> Option<Rule> {
        match n {
            1 => Some(Rule::One),
            2 => Some(Rule::Two),
            3 => Some(Rule::Three),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

/// True iff every path between `x` and `y` is blocked by `z`.
pub fn d_separated(
    g: &SemiMarkovGraph,
    x: VertexSet,
    y: VertexSet,
    z: VertexSet,
) -> Result<bool, DsepError> {
    let all = g.vertices();
    if !(x | y | z).is_subset(all) {
        return Err(DsepError::Foreign);
    }
    if !x.is_disjoint(y) {
        return Err(DsepError::Overlap("X and Y"));
    }
    if !z.is_disjoint(x | y) {
        return Err(DsepError::Overlap("Z and X or Y"));
    }
    Ok(separated(g, x, y, z))
}

/// Unchecked variant used on hot paths where the caller guarantees the
/// contract of [`d_separated`].
pub(crate) fn separated(g: &SemiMarkovGraph, x: VertexSet, y: VertexSet, z: VertexSet) -> bool {
    if x.is_empty() || y.is_empty() {
        return true;
    }
    let an_z = g.ancestors(z);
    // up: arrived from a child (or start); down: arrived from a parent
    let mut seen_up = VertexSet::EMPTY;
    let mut seen_down = VertexSet::EMPTY;
    let mut stack: Vec<(usize, bool)> = x.iter().map(|v| (v, true)).collect();
    while let Some((v, up)) = stack.pop() {
        if up {
            if seen_up.contains(v) {
                continue;
            }
            seen_up.insert(v);
        } else {
            if seen_down.contains(v) {
                continue;
            }
            seen_down.insert(v);
        }
        let observed = z.contains(v);
        if !observed && y.contains(v) {
            return false;
        }
        if up {
            if observed {
                continue;
            }
            for p in g.parents_of(v).iter() {
                stack.push((p, true));
            }
            for c in g.children_of(v).iter() {
                stack.push((c, false));
            }
            for s in g.spouses_of(v).iter() {
                stack.push((s, false));
            }
        } else {
            if !observed {
                for c in g.children_of(v).iter() {
                    stack.push((c, false));
                }
            }
            if an_z.contains(v) {
                // collider (directed or through a latent) opened by evidence
                for p in g.parents_of(v).iter() {
                    stack.push((p, true));
                }
                for s in g.spouses_of(v).iter() {
                    stack.push((s, false));
                }
            }
        }
    }
    true
}

/// Whether rule `rule` licenses the rewrite for `(Y, Z, X, W)`:
///
/// * rule 1: `P(y | do(x), z, w) = P(y | do(x), w)` if `(Y ⟂ Z | X, W)` in `G[X̄]`
/// * rule 2: `P(y | do(x, z), w) = P(y | do(x), z, w)` if `(Y ⟂ Z | X, W)` in `G[X̄, Z̲]`
/// * rule 3: `P(y | do(x, z), w) = P(y | do(x), w)` if `(Y ⟂ Z | X, W)` in
///   `G[X̄, Z(W)‾]` with `Z(W) = Z \ An(W)` taken in `G[X̄]`
pub fn rule_applicable(
    g: &SemiMarkovGraph,
    rule: Rule,
    y: VertexSet,
    z: VertexSet,
    x: VertexSet,
    w: VertexSet,
) -> Result<bool, DsepError> {
    if !(y | z | x | w).is_subset(g.vertices()) {
        return Err(DsepError::Foreign);
    }
    let pairs = [
        (y, z, "Y and Z"),
        (y, x, "Y and X"),
        (y, w, "Y and W"),
        (z, x, "Z and X"),
        (z, w, "Z and W"),
        (x, w, "X and W"),
    ];
    for (a, b, what) in pairs {
        if !a.is_disjoint(b) {
            return Err(DsepError::Overlap(what));
        }
    }
    Ok(rule_holds(g, rule, y, z, x, w))
}

pub(crate) fn rule_holds(
    g: &SemiMarkovGraph,
    rule: Rule,
    y: VertexSet,
    z: VertexSet,
    x: VertexSet,
    w: VertexSet,
) -> bool {
    if z.is_empty() || y.is_empty() {
        return true;
    }
    let cut = match rule {
        Rule::One => g.cut(x, VertexSet::EMPTY),
        Rule::Two => g.cut(x, z),
        Rule::Three => {
            let an_w = g.cut(x, VertexSet::EMPTY).ancestors(w);
            g.cut(x | z.minus(an_w), VertexSet::EMPTY)
        }
    };
    separated(&cut, y, z, x | w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(s: &str) -> SemiMarkovGraph {
        SemiMarkovGraph::parse(s).unwrap()
    }

    const FIG2: &str = "w -> z, z -> x, x -> y, w -> y, w <-> z, z <-> x, z <-> y";

    #[test]
    fn worked_separations() {
        let fig3 = g("x -> z, z -> y, x <-> z");
        let s = |n: &[&str]| fig3.set_of(n).unwrap();
        let cut = fig3.edge_cut(VertexSet::EMPTY, s(&["x"])).unwrap();
        assert!(d_separated(&cut, s(&["y"]), s(&["x"]), s(&["z"])).unwrap());
        assert!(!d_separated(&fig3, s(&["y"]), s(&["x"]), VertexSet::EMPTY).unwrap());

        let fig2 = g(FIG2);
        let s = |n: &[&str]| fig2.set_of(n).unwrap();
        let cut = fig2.edge_cut(s(&["x", "z"]), VertexSet::EMPTY).unwrap();
        assert!(d_separated(&cut, s(&["y"]), s(&["z"]), s(&["x"])).unwrap());

        let collider = g("x -> m, y -> m");
        let s = |n: &[&str]| collider.set_of(n).unwrap();
        assert!(d_separated(&collider, s(&["x"]), s(&["y"]), VertexSet::EMPTY).unwrap());
        assert!(!d_separated(&collider, s(&["x"]), s(&["y"]), s(&["m"])).unwrap());
    }

    #[test]
    fn bidirected_collider_patterns() {
        // i <-> m <- j, opened by a descendant of m
        let h = g("j -> m, m -> d, i <-> m");
        let s = |n: &[&str]| h.set_of(n).unwrap();
        assert!(d_separated(&h, s(&["i"]), s(&["j"]), VertexSet::EMPTY).unwrap());
        assert!(!d_separated(&h, s(&["i"]), s(&["j"]), s(&["d"])).unwrap());
        // i <-> m <-> j
        let h = g("i <-> m, m <-> j");
        let s = |n: &[&str]| h.set_of(n).unwrap();
        assert!(d_separated(&h, s(&["i"]), s(&["j"]), VertexSet::EMPTY).unwrap());
        assert!(!d_separated(&h, s(&["i"]), s(&["j"]), s(&["m"])).unwrap());
        // i <-> m -> j is a chain through m
        let h = g("m -> j, i <-> m");
        let s = |n: &[&str]| h.set_of(n).unwrap();
        assert!(!d_separated(&h, s(&["i"]), s(&["j"]), VertexSet::EMPTY).unwrap());
        assert!(d_separated(&h, s(&["i"]), s(&["j"]), s(&["m"])).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let h = g("a -> b");
        let a = h.set_of(&["a"]).unwrap();
        assert!(d_separated(&h, a, a, VertexSet::EMPTY).is_err());
        assert!(rule_applicable(&h, Rule::One, a, a, VertexSet::EMPTY, VertexSet::EMPTY).is_err());
    }

    #[test]
    fn worked_rule_checks() {
        let fig2 = g(FIG2);
        let s = |n: &[&str]| fig2.set_of(n).unwrap();
        let e = VertexSet::EMPTY;
        assert!(rule_applicable(&fig2, Rule::Three, s(&["w"]), s(&["x"]), e, e).unwrap());
        assert!(rule_applicable(&fig2, Rule::Two, s(&["y"]), s(&["x"]), s(&["z"]), s(&["w"])).unwrap());
        assert!(rule_applicable(&fig2, Rule::Three, s(&["y"]), s(&["z"]), s(&["x"]), s(&["w"])).unwrap());
        // vacuous Z
        assert!(rule_applicable(&fig2, Rule::One, s(&["y"]), e, s(&["x"]), s(&["w"])).unwrap());
        // P(y | do(x)) != P(y | x) here: back-door through z
        assert!(!rule_applicable(&fig2, Rule::Two, s(&["y"]), s(&["x"]), e, e).unwrap());
    }
}
