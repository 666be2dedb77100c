//! Structural properties on random graphs and expressions.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use surrogate_core::formula::{divide, marginal};
use surrogate_core::oracle::{random_scm, Evaluator, InfoTables};
use surrogate_core::simstudy::random_graph;
use surrogate_core::transport::TransportDiagram;
use surrogate_core::{canonicalize, d_separated, Atom, Expr, InfoSet, SemiMarkovGraph, VertexSet};

fn graph(seed: u64, n: usize) -> SemiMarkovGraph {
    random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n, 0.4, 0.3).unwrap()
}

/// Disjoint `(x, y, z)` from three masks; x and y nonempty when possible.
fn split(all: VertexSet, a: u64, b: u64, c: u64) -> (VertexSet, VertexSet, VertexSet) {
    let x = all & VertexSet::from_bits(a);
    let y = all.minus(x) & VertexSet::from_bits(b);
    let z = all.minus(x | y) & VertexSet::from_bits(c);
    (x, y, z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transport_nodes_do_not_change_separation(
        seed in any::<u64>(), n in 3usize..=7, targets in any::<u64>(), t_keep in any::<u64>(),
        a in any::<u64>(), b in any::<u64>(), c in any::<u64>(),
    ) {
        let g = graph(seed, n);
        let all = g.vertices();
        let (x, y, z) = split(all, a, b, c);
        prop_assume!(!x.is_empty() && !y.is_empty());
        let d = TransportDiagram { base: g.clone(), t_targets: all & VertexSet::from_bits(targets) };
        let (dg, t) = d.materialize(all).unwrap();
        let t_prime = t & VertexSet::from_bits(t_keep.rotate_left(n as u32));
        prop_assert_eq!(
            d_separated(&dg, x, y, z | t_prime).unwrap(),
            d_separated(&g, x, y, z).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn c_components_partition_vertices(seed in any::<u64>(), n in 1usize..=10) {
        let g = graph(seed, n);
        let comps = g.c_components();
        let mut union = VertexSet::EMPTY;
        for c in &comps {
            prop_assert!(!c.is_empty());
            prop_assert!(union.is_disjoint(*c));
            union |= *c;
            // no bidirected edge leaves a component
            for v in c.iter() {
                prop_assert!(g.spouses_of(v).is_subset(*c));
            }
        }
        prop_assert_eq!(union, g.vertices());
    }
}

const BASE: &str = "a -> b, b -> c, a -> c, c -> d, a <-> d, b <-> d";

fn atom_strategy() -> impl Strategy<Value = Expr> {
    (1u64..16, 0u64..16).prop_map(|(out, given)| {
        let out = VertexSet::from_bits(out);
        Expr::atom(Atom::obs(out, VertexSet::from_bits(given).minus(out)))
    })
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    atom_strategy().prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Expr::product),
            (inner.clone(), 1u64..16).prop_map(|(e, mask)| {
                let vars = e.free_vars() & VertexSet::from_bits(mask);
                if vars.is_empty() { e } else { Expr::sum(vars, e) }
            }),
            (inner.clone(), inner).prop_map(|(n, d)| Expr::quotient(n, d)),
        ]
    })
}

fn tables(g: &SemiMarkovGraph, seed: u64) -> InfoTables {
    let scm = random_scm(g, seed, 2, 2).unwrap();
    InfoTables::build(&scm, &InfoSet { members: vec![Atom::obs(g.vertices(), VertexSet::EMPTY)] }).unwrap()
}

/// Largest relative difference between `a` and `b` over every assignment
/// of the four binary variables.
fn max_diff(t: &InfoTables, a: &Expr, b: &Expr) -> f64 {
    let mut ev = Evaluator::new(t);
    let mut worst: f64 = 0.0;
    for bits in 0..16usize {
        let mut assign: Vec<usize> = (0..4).map(|k| (bits >> k) & 1).collect();
        let va = ev.eval(a, &mut assign).unwrap();
        let vb = ev.eval(b, &mut assign).unwrap();
        worst = worst.max((va - vb).abs() / va.abs().max(1.0));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonicalize_is_idempotent(e in expr_strategy()) {
        let once = canonicalize(&e);
        prop_assert_eq!(canonicalize(&once), once);
    }

    #[test]
    fn rewrites_are_numerically_neutral(e in expr_strategy(), other in expr_strategy(), mask in 1u64..16) {
        let g = SemiMarkovGraph::parse(BASE).unwrap();
        let vars = e.free_vars() & VertexSet::from_bits(mask);
        for seed in 0..10 {
            let t = tables(&g, seed);
            prop_assert!(max_diff(&t, &e, &canonicalize(&e)) <= 1e-12);
            let explicit = Expr::Sum { vars, body: Box::new(e.clone()) };
            prop_assert!(max_diff(&t, &explicit, &marginal(&e, vars).unwrap()) <= 1e-12);
            let q = Expr::Quotient { num: Box::new(e.clone()), den: Box::new(other.clone()) };
            prop_assert!(max_diff(&t, &q, &divide(e.clone(), other.clone())) <= 1e-12);
        }
    }
}
