//! Identification of causal effects from surrogate experiments.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] and [`dsep`]: semi-Markovian graphs, d-separation and the
//!   do-calculus rule checks;
//! * [`formula`]: symbolic probability expressions;
//! * [`transport`]: the transportability recursion over selection diagrams;
//! * [`surrogate`]: the end-to-end surrogate-outcome pipeline;
//! * [`oracle`]: discrete structural models, numeric evaluation and a
//!   bounded do-calculus derivation search;
//! * [`simstudy`]: the random-instance simulation study.

pub mod dsep;
pub mod formula;
pub mod graph;
pub mod oracle;
pub mod surrogate;
pub mod simstudy;
pub mod transport;
pub mod vset;

pub use dsep::{d_separated, rule_applicable, DsepError, Rule};
pub use formula::{canonicalize, expr_equal, parse_expr, render, Atom, Expr, FormulaError, Style};
pub use graph::{GraphError, Relation, SemiMarkovGraph, TieBreak, TopoOrder};
pub use oracle::{docalc_search, random_scm, verify, Derivation, DiscreteScm, SearchBounds, SearchOutcome, VerifyReport};
pub use surrogate::{
    information_set, rewrite_transport, strip_domains, surrogate_identify, surrogate_pipeline, validate_query, InfoSet,
    SurrogateError, SurrogateOutcome, SurrogateQuery, Violation,
};
pub use transport::{
    identify_plain, query_transform, trso, TransportDiagram, TransportError, TransportQuery, TrsoFailure, TrsoOutcome,
};
pub use vset::VertexSet;
