//! Derivation search on the worked examples, and replay of hand-written
//! step sequences.

use surrogate_core::oracle::{docalc_search, verify, Derivation, Move, SearchBounds, SearchOutcome};
use surrogate_core::{
    expr_equal, information_set, parse_expr, render, Atom, Expr, InfoSet, Rule, SemiMarkovGraph, Style, SurrogateQuery,
    VertexSet,
};

const ZID: &str = "w -> z, z -> x, x -> y, w -> y, w <-> z, z <-> x, z <-> y";
const CHAIN_CONFOUNDED: &str = "w -> x, w -> z, x -> z, z -> y, x <-> z";
const FOUR_NODE: &str = "x -> y, z2 -> z1, z1 -> x, x -> w1, w1 -> w2, w2 -> y, x <-> z2, z2 <-> y, x <-> y";
const INCOMPLETE: &str = "x1 -> z, z -> y2, y1 -> x1, y1 -> z, x2 -> y1, x2 -> z, x2 -> y2, x2 <-> y1, y1 <-> z, \
                          y2 <-> y1";

fn atom(g: &SemiMarkovGraph, text: &str) -> Atom {
    surrogate_core::formula::parse_atom(text, g).unwrap()
}

fn found(g: &SemiMarkovGraph, target: &Atom, info: &InfoSet) -> Derivation {
    match docalc_search(g, target, info, SearchBounds::default()) {
        SearchOutcome::Found(d) => d,
        other => panic!("no derivation: {other:?}"),
    }
}

fn check(g: &SemiMarkovGraph, d: &Derivation, info: &InfoSet, expect: &str) {
    d.replay(g, Some(info)).unwrap();
    let expect = parse_expr(expect, g).unwrap();
    assert!(expr_equal(&d.result, &expect), "{}", render(&d.result, g, Style::Text));
    let r = verify(g, d.target.do_set, d.target.outcomes, info, &d.result, 20, 1e-9).unwrap();
    assert!(r.pass, "{r:?}");
}

fn s(g: &SemiMarkovGraph, names: &[&str]) -> VertexSet {
    g.set_of(names).unwrap()
}

fn rule(g: &SemiMarkovGraph, rule: Rule, y: &[&str], z: &[&str], x: &[&str], w: &[&str], to: &str) -> Move {
    Move::Rule { rule, y: s(g, y), z: s(g, z), x: s(g, x), w: s(g, w), to: atom(g, to) }
}

#[test]
fn surrogate_experiment_on_z() {
    let g = SemiMarkovGraph::parse(ZID).unwrap();
    let info = InfoSet { members: vec![atom(&g, "P(w,x,y,z)"), atom(&g, "P(x,y,w|do(z))")] };
    let target = atom(&g, "P(y|do(x))");
    let hand = Derivation::from_moves(
        target.clone(),
        vec![
            (target.clone(), Move::Marginalize { vars: s(&g, &["w"]) }),
            (atom(&g, "P(y,w|do(x))"), Move::ChainSplit { first: s(&g, &["y"]) }),
            (atom(&g, "P(y|do(x),w)"), rule(&g, Rule::Three, &["y"], &["z"], &["x"], &["w"], "P(y|do(x,z),w)")),
            (atom(&g, "P(w|do(x))"), rule(&g, Rule::Three, &["w"], &["x"], &[], &[], "P(w)")),
            (atom(&g, "P(y|do(x,z),w)"), rule(&g, Rule::Two, &["y"], &["x"], &["z"], &["w"], "P(y|do(z),x,w)")),
        ],
    )
    .unwrap();
    check(&g, &hand, &info, "sum_{w}[P(y|do(z),x,w) P(w)]");
    // The cheapest derivation skips the adjustment for w: inserting do(z)
    // also cuts z <-> y, after which x can be exchanged for an observation.
    let d = found(&g, &target, &info);
    assert_eq!(d.steps.len(), 2);
    check(&g, &d, &info, "P(y|do(z),x)");
}

#[test]
fn confounded_chain_sequence() {
    let g = SemiMarkovGraph::parse(CHAIN_CONFOUNDED).unwrap();
    let q = SurrogateQuery::from_names(g.clone(), &["x"], &["y"], &[(&["x"], &["z"])]).unwrap();
    let info = information_set(&q).unwrap();
    let target = atom(&g, "P(y|do(x))");
    let hand = Derivation::from_moves(
        target.clone(),
        vec![
            (target.clone(), Move::Marginalize { vars: s(&g, &["z", "w"]) }),
            (atom(&g, "P(y,z,w|do(x))"), Move::ChainSplit { first: s(&g, &["y"]) }),
            (atom(&g, "P(z,w|do(x))"), Move::ChainSplit { first: s(&g, &["z"]) }),
            (atom(&g, "P(y|do(x),z,w)"), rule(&g, Rule::Two, &["y"], &["x"], &[], &["z", "w"], "P(y|x,z,w)")),
            (atom(&g, "P(w|do(x))"), rule(&g, Rule::Three, &["w"], &["x"], &[], &[], "P(w)")),
        ],
    )
    .unwrap();
    let expect = "sum_{z,w}[P(y|x,z,w) P(z|do(x),w) P(w)]";
    check(&g, &hand, &info, expect);
    let d = found(&g, &target, &info);
    assert!(d.steps.len() <= hand.steps.len());
    check(&g, &d, &info, expect);
}

#[test]
fn four_node_sequence() {
    let g = SemiMarkovGraph::parse(FOUR_NODE).unwrap();
    let q = SurrogateQuery::from_names(g.clone(), &["x"], &["y"], &[(&["x"], &["y"])]).unwrap();
    let info = information_set(&q).unwrap();
    let target = atom(&g, "P(y|do(x))");
    // The last rule-3 step is usually written with W = {}; the
    // term it acts on is conditioned on w1, w2, so W = {w1, w2} here.
    let hand = Derivation::from_moves(
        target.clone(),
        vec![
            (target.clone(), rule(&g, Rule::Three, &["y"], &["z1", "z2"], &["x"], &[], "P(y|do(x,z1,z2))")),
            (atom(&g, "P(y|do(x,z1,z2))"), Move::Marginalize { vars: s(&g, &["w1", "w2"]) }),
            (atom(&g, "P(y,w1,w2|do(x,z1,z2))"), Move::ChainSplit { first: s(&g, &["y"]) }),
            (
                atom(&g, "P(w1,w2|do(x,z1,z2))"),
                rule(&g, Rule::Three, &["w1", "w2"], &["z1", "z2"], &["x"], &[], "P(w1,w2|do(x))"),
            ),
            (atom(&g, "P(w1,w2|do(x))"), rule(&g, Rule::Two, &["w1", "w2"], &["x"], &[], &[], "P(w1,w2|x)")),
            (
                atom(&g, "P(y|do(x,z1,z2),w1,w2)"),
                rule(&g, Rule::Three, &["y"], &["z1", "z2"], &["x"], &["w1", "w2"], "P(y|do(x),w1,w2)"),
            ),
        ],
    )
    .unwrap();
    let expect = "sum_{w1,w2}[P(y|do(x),w1,w2) P(w1,w2|x)]";
    check(&g, &hand, &info, expect);
    let d = found(&g, &target, &info);
    assert!(d.steps.len() <= hand.steps.len());
    check(&g, &d, &info, expect);
}

#[test]
fn incomplete_example_is_found() {
    let g = SemiMarkovGraph::parse(INCOMPLETE).unwrap();
    // pairs reconstructed from the two listed experimental distributions
    let q = SurrogateQuery::from_names(g.clone(), &["x1", "x2"], &["y1", "y2"], &[(&["x2"], &["y2", "z"]), (&["x2"], &["y1"])])
        .unwrap();
    let info = information_set(&q).unwrap();
    let d = found(&g, &atom(&g, "P(y1,y2|do(x1,x2))"), &info);
    check(&g, &d, &info, "P(y1|do(x2)) sum_{z}[P(y2,z|do(x2),x1,y1)]");
}

#[test]
fn zero_step_and_depth_exhaustion() {
    let g = SemiMarkovGraph::parse(CHAIN_CONFOUNDED).unwrap();
    let q = SurrogateQuery::from_names(g.clone(), &["x"], &["y"], &[(&["x"], &["z"])]).unwrap();
    let info = information_set(&q).unwrap();
    let d = found(&g, &atom(&g, "P(z|do(x),w)"), &info);
    assert!(d.steps.is_empty());
    assert_eq!(d.result, Expr::atom(atom(&g, "P(z|do(x),w)")));
    let tight = SearchBounds { max_depth: 2, ..SearchBounds::default() };
    assert!(matches!(docalc_search(&g, &atom(&g, "P(y|do(x))"), &info, tight), SearchOutcome::NotFound { .. }));
}
