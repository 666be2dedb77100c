//! Fixture queries shared by the benchmarks.

use surrogate_core::SurrogateQuery;

pub const INTRO: &str = "x_1 -> y_2, x_1 -> y_1, w -> y_1, w -> y_2, z -> y_1, x_2 -> y_2, z -> y_2, z -> x_2, \
                         w <-> z, z <-> x_2, y_1 <-> x_1";
pub const SEVEN: &str = "x -> b_1, x -> w, w -> y, b_1 -> b_2, b_2 -> w, b_2 -> y, a_1 -> x, a_1 -> a_2, a_2 -> w, \
                         a_2 -> y, x <-> a_1, x <-> w, x <-> b_2, a_2 <-> y";
pub const INCOMPLETE: &str = "x1 -> z, z -> y2, y1 -> x1, y1 -> z, x2 -> y1, x2 -> z, x2 -> y2, x2 <-> y1, \
                              y1 <-> z, y2 <-> y1";

fn query(dsl: &str, x: &[&str], y: &[&str], pairs: &[(&[&str], &[&str])]) -> SurrogateQuery {
    let g = surrogate_core::SemiMarkovGraph::parse(dsl).expect("fixture graph parses");
    SurrogateQuery::from_names(g, x, y, pairs).expect("fixture query is well formed")
}

/// Two treatments with one surrogate experiment each.
pub fn intro() -> SurrogateQuery {
    query(INTRO, &["x_1", "x_2"], &["y_1", "y_2"], &[(&["x_2"], &["y_2"]), (&["x_1"], &["y_1"])])
}

/// Seven-vertex query whose formula has seven factors.
pub fn seven() -> SurrogateQuery {
    query(SEVEN, &["x"], &["y"], &[(&["x"], &["w"])])
}

/// Query TRSO cannot settle but the derivation search can.
pub fn incomplete() -> SurrogateQuery {
    query(INCOMPLETE, &["x1", "x2"], &["y1", "y2"], &[(&["x2"], &["y2", "z"]), (&["x2"], &["y1"])])
}
