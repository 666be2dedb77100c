//! Ground truth: discrete models, exact enumeration, numeric evaluation of
//! formulas, verification, and the derivation search.

mod eval;
mod scm;
mod search;

use thiserror::Error;

pub use eval::{eval_expr, verify, verify_with, Evaluator, InfoTables, MemberTable, VerifyOptions, VerifyReport};
pub use scm::{random_scm, Cpt, DiscreteScm, DistTable, Latent};
pub use search::{
    docalc_search, expansion, rule_sides, Derivation, Exhaustion, Move, ReplayError, SearchBounds, SearchOutcome, Step,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("arities must be at least 2")]
    Arity,
    #[error("intervention value out of range")]
    OutOfRange,
    #[error("no information-set table yields {0}")]
    Unresolvable(String),
}
