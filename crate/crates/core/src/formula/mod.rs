//! Symbolic probability expressions.
//!
//! Variables are vertex ids; an [`Atom`] carries variable identities only and
//! its values come from the evaluation context. A [`Expr::Sum`] binds its
//! variables lexically: a bound variable shadows the same vertex bound further
//! out (renderers mark shadowing binders with primes).

mod canon;
mod parse;
mod render;

use std::fmt;

use thiserror::Error;

pub use canon::{canonicalize, expr_equal};
pub use parse::{parse_atom, parse_expr};
pub use render::{expr_to_json, render, Style};

use crate::graph::{SemiMarkovGraph, TopoOrder};
use crate::vset::VertexSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("summation variables are not free in the expression")]
    NotFree,
    #[error("c-factor requested for an empty component")]
    EmptyComponent,
    #[error("component is not contained in the scope")]
    OutOfScope,
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// A (possibly conditional, possibly interventional) probability term
/// `P^(domain)(outcomes | do(do_set), given)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub domain: u32,
    pub do_set: VertexSet,
    pub outcomes: VertexSet,
    pub given: VertexSet,
}

impl Atom {
    pub fn new(domain: u32, outcomes: VertexSet, do_set: VertexSet, given: VertexSet) -> Self {
        Atom { domain, do_set, outcomes, given }
    }

    /// Observational target-domain term `P(outcomes | given)`.
    pub fn obs(outcomes: VertexSet, given: VertexSet) -> Self {
        Atom::new(0, outcomes, VertexSet::EMPTY, given)
    }

    pub fn variables(&self) -> VertexSet {
        self.do_set | self.outcomes | self.given
    }

    pub fn is_well_formed(&self) -> bool {
        !self.outcomes.is_empty()
            && self.do_set.is_disjoint(self.outcomes)
            && self.do_set.is_disjoint(self.given)
            && self.outcomes.is_disjoint(self.given)
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}({:?}|do{:?},{:?})", self.domain, self.outcomes, self.do_set, self.given)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    One,
    Atom(Atom),
    Sum { vars: VertexSet, body: Box<Expr> },
    Product(Vec<Expr>),
    Quotient { num: Box<Expr>, den: Box<Expr> },
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::One => write!(f, "1"),
            Expr::Atom(a) => write!(f, "{a:?}"),
            Expr::Sum { vars, body } => write!(f, "Σ{vars:?}[{body:?}]"),
            Expr::Product(fs) => {
                write!(f, "(")?;
                for (i, x) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{x:?}")?;
                }
                write!(f, ")")
            }
            Expr::Quotient { num, den } => write!(f, "({num:?})/({den:?})"),
        }
    }
}

impl From<Atom> for Expr {
    fn from(a: Atom) -> Self {
        Expr::Atom(a)
    }
}

impl Expr {
    pub fn atom(a: Atom) -> Self {
        Expr::Atom(a)
    }

    /// Builds a product, flattening nested products and dropping `One`.
    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        for f in factors {
            match f {
                Expr::One => {}
                Expr::Product(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Expr::One,
            1 => flat.pop().expect("one factor"),
            _ => Expr::Product(flat),
        }
    }

    /// Builds `Σ_vars body` without any simplification beyond dropping an
    /// empty binder and merging directly nested sums.
    pub fn sum(vars: VertexSet, body: Expr) -> Expr {
        if vars.is_empty() {
            return body;
        }
        match body {
            Expr::Sum { vars: inner, body } if inner.is_disjoint(vars) => {
                Expr::Sum { vars: vars | inner, body }
            }
            body => Expr::Sum { vars, body: Box::new(body) },
        }
    }

    pub fn quotient(num: Expr, den: Expr) -> Expr {
        if den == Expr::One {
            num
        } else {
            Expr::Quotient { num: Box::new(num), den: Box::new(den) }
        }
    }

    pub fn free_vars(&self) -> VertexSet {
        match self {
            Expr::One => VertexSet::EMPTY,
            Expr::Atom(a) => a.variables(),
            Expr::Sum { vars, body } => body.free_vars().minus(*vars),
            Expr::Product(fs) => fs.iter().fold(VertexSet::EMPTY, |acc, f| acc | f.free_vars()),
            Expr::Quotient { num, den } => num.free_vars() | den.free_vars(),
        }
    }

    /// Every atom, in pre-order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    pub fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Expr::One => {}
            Expr::Atom(a) => f(a),
            Expr::Sum { body, .. } => body.visit_atoms(f),
            Expr::Product(fs) => fs.iter().for_each(|x| x.visit_atoms(f)),
            Expr::Quotient { num, den } => {
                num.visit_atoms(f);
                den.visit_atoms(f);
            }
        }
    }

    /// Rebuilds the expression with every atom replaced by `f(atom)`.
    pub fn try_map_atoms<E>(&self, f: &mut impl FnMut(&Atom) -> Result<Expr, E>) -> Result<Expr, E> {
        Ok(match self {
            Expr::One => Expr::One,
            Expr::Atom(a) => f(a)?,
            Expr::Sum { vars, body } => Expr::Sum { vars: *vars, body: Box::new(body.try_map_atoms(f)?) },
            Expr::Product(fs) => {
                Expr::product(fs.iter().map(|x| x.try_map_atoms(f)).collect::<Result<_, _>>()?)
            }
            Expr::Quotient { num, den } => Expr::Quotient {
                num: Box::new(num.try_map_atoms(f)?),
                den: Box::new(den.try_map_atoms(f)?),
            },
        })
    }

    pub fn map_atoms(&self, f: &mut impl FnMut(&Atom) -> Expr) -> Expr {
        self.try_map_atoms::<std::convert::Infallible>(&mut |a| Ok(f(a))).unwrap_or_else(|e| match e {})
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::One | Expr::Atom(_) => 1,
            Expr::Sum { body, .. } => 1 + body.size(),
            Expr::Product(fs) => 1 + fs.iter().map(Expr::size).sum::<usize>(),
            Expr::Quotient { num, den } => 1 + num.size() + den.size(),
        }
    }

    pub fn to_text(&self, g: &SemiMarkovGraph) -> String {
        render(self, g, Style::Text)
    }
}

/// `Σ_vars e` with the marginalization rewrites applied:
///
/// * summing an atom over part of its outcomes drops those outcomes,
/// * in a product, a factor whose summed outcomes occur in no other factor
///   (and not in its own conditioning) is marginalized on its own,
/// * directly nested sums merge.
pub fn marginal(e: &Expr, vars: VertexSet) -> Result<Expr, FormulaError> {
    if vars.is_empty() {
        return Ok(e.clone());
    }
    if !vars.is_subset(e.free_vars()) {
        return Err(FormulaError::NotFree);
    }
    Ok(sum_simplified(vars, e.clone()))
}

pub(crate) fn sum_simplified(vars: VertexSet, e: Expr) -> Expr {
    if vars.is_empty() {
        return e;
    }
    match e {
        Expr::Atom(a) if vars.is_subset(a.outcomes) => {
            let outcomes = a.outcomes.minus(vars);
            if outcomes.is_empty() {
                Expr::One
            } else {
                Expr::Atom(Atom { outcomes, ..a })
            }
        }
        Expr::Product(factors) => {
            let mut factors = factors;
            let mut left = vars;
            loop {
                let mut progressed = false;
                for i in 0..factors.len() {
                    let Expr::Atom(a) = &factors[i] else { continue };
                    let elsewhere = factors
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .fold(VertexSet::EMPTY, |acc, (_, f)| acc | f.free_vars());
                    let local = (left & a.outcomes).minus(elsewhere);
                    if local.is_empty() {
                        continue;
                    }
                    let outcomes = a.outcomes.minus(local);
                    left = left.minus(local);
                    if outcomes.is_empty() {
                        factors.remove(i);
                    } else {
                        factors[i] = Expr::Atom(Atom { outcomes, ..a.clone() });
                    }
                    progressed = true;
                    break;
                }
                if !progressed || left.is_empty() {
                    break;
                }
            }
            Expr::sum(left, Expr::product(factors))
        }
        Expr::Sum { vars: inner, body } if inner.is_disjoint(vars) => sum_simplified(vars | inner, *body),
        other => Expr::sum(vars, other),
    }
}

/// `num / den` with the conditioning collapse and common-factor
/// cancellation applied.
pub fn divide(num: Expr, den: Expr) -> Expr {
    match (num, den) {
        (num, Expr::One) => num,
        (Expr::Atom(n), Expr::Atom(d)) if collapse(&n, &d).is_some() => {
            Expr::Atom(collapse(&n, &d).expect("checked"))
        }
        (num, den) if num == den => Expr::One,
        (num, den) => {
            let mut nf = factors_of(num);
            let mut left = Vec::new();
            for d in factors_of(den) {
                if let Some(pos) = nf.iter().position(|f| *f == d) {
                    nf.remove(pos);
                } else {
                    left.push(d);
                }
            }
            let num = Expr::product(nf);
            if left.is_empty() {
                return num;
            }
            let den = Expr::product(left);
            // the partly cancelled pair may now be an atom pair
            if let (Expr::Atom(n), Expr::Atom(d)) = (&num, &den) {
                if let Some(a) = collapse(n, d) {
                    return Expr::Atom(a);
                }
            }
            Expr::quotient(num, den)
        }
    }
}

/// `P(a, b | c) / P(b | c) = P(a | b, c)`.
fn collapse(n: &Atom, d: &Atom) -> Option<Atom> {
    let ok = n.domain == d.domain
        && n.do_set == d.do_set
        && n.given == d.given
        && d.outcomes.is_subset(n.outcomes)
        && d.outcomes != n.outcomes;
    ok.then(|| Atom { outcomes: n.outcomes.minus(d.outcomes), given: n.given | d.outcomes, ..n.clone() })
}

fn factors_of(e: Expr) -> Vec<Expr> {
    match e {
        Expr::Product(fs) => fs,
        Expr::One => Vec::new(),
        other => vec![other],
    }
}

/// The c-factor of `component` from the local distribution `p` over `scope`:
/// `∏_{v ∈ C} (Σ_{scope \ V≤v} p) / (Σ_{scope \ V<v} p)`, with prefixes taken
/// in `order`. No outer summation is applied.
pub fn c_factor(
    p: &Expr,
    scope: VertexSet,
    component: VertexSet,
    order: &TopoOrder,
) -> Result<Expr, FormulaError> {
    if component.is_empty() {
        return Err(FormulaError::EmptyComponent);
    }
    if !component.is_subset(scope) {
        return Err(FormulaError::OutOfScope);
    }
    let mut factors = Vec::with_capacity(component.len());
    for v in order.sorted(component) {
        let upto = order.up_to(v) & scope;
        let num = sum_simplified(scope.minus(upto), p.clone());
        let den = sum_simplified(scope.minus(upto.without(v)), p.clone());
        factors.push(divide(num, den));
    }
    Ok(Expr::product(factors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(ids: &[usize]) -> VertexSet {
        ids.iter().copied().collect()
    }

    #[test]
    fn marginal_of_atom_drops_outcomes() {
        // ids: x=0, y=1, z=2
        let p = Expr::atom(Atom::obs(vs(&[0, 1, 2]), VertexSet::EMPTY));
        assert_eq!(marginal(&p, vs(&[2])).unwrap(), Expr::atom(Atom::obs(vs(&[0, 1]), VertexSet::EMPTY)));
        assert_eq!(marginal(&p, VertexSet::EMPTY).unwrap(), p);
        assert_eq!(marginal(&p, vs(&[5])), Err(FormulaError::NotFree));
    }

    #[test]
    fn marginal_of_coupled_product_stays_a_sum() {
        let y_given = Expr::atom(Atom::obs(vs(&[1]), vs(&[0, 2])));
        let z_do = Expr::atom(Atom::new(0, vs(&[2]), vs(&[0]), VertexSet::EMPTY));
        let prod = Expr::product(vec![y_given.clone(), z_do.clone()]);
        let m = marginal(&prod, vs(&[2])).unwrap();
        assert_eq!(m, Expr::Sum { vars: vs(&[2]), body: Box::new(prod) });
    }

    #[test]
    fn c_factor_chain_rule() {
        // x=0, z=1, y=2 with order x, z, y
        let g = SemiMarkovGraph::parse("x -> z, z -> y").unwrap();
        let order = g.topological_order();
        let p = Expr::atom(Atom::obs(vs(&[0, 1, 2]), VertexSet::EMPTY));
        let f = c_factor(&p, vs(&[0, 1, 2]), vs(&[1, 2]), &order).unwrap();
        let expect = Expr::product(vec![
            Expr::atom(Atom::obs(vs(&[1]), vs(&[0]))),
            Expr::atom(Atom::obs(vs(&[2]), vs(&[0, 1]))),
        ]);
        assert_eq!(f, expect);
        let single = Expr::atom(Atom::obs(vs(&[0]), VertexSet::EMPTY));
        assert_eq!(c_factor(&single, vs(&[0]), vs(&[0]), &order).unwrap(), single);
        assert_eq!(c_factor(&p, vs(&[0, 1, 2]), VertexSet::EMPTY, &order), Err(FormulaError::EmptyComponent));
    }

    #[test]
    fn c_factor_of_ordered_product_cancels() {
        let g = SemiMarkovGraph::parse("a -> b, b -> c").unwrap();
        let order = g.topological_order();
        let p = Expr::product(vec![
            Expr::atom(Atom::obs(vs(&[0]), VertexSet::EMPTY)),
            Expr::atom(Atom::obs(vs(&[1]), vs(&[0]))),
            Expr::atom(Atom::obs(vs(&[2]), vs(&[0, 1]))),
        ]);
        let f = c_factor(&p, vs(&[0, 1, 2]), vs(&[1]), &order).unwrap();
        assert_eq!(f, Expr::atom(Atom::obs(vs(&[1]), vs(&[0]))));
    }

    #[test]
    fn divide_collapses_conditioning() {
        let num = Expr::atom(Atom::obs(vs(&[1, 2]), VertexSet::EMPTY));
        let den = marginal(&num, vs(&[1])).unwrap();
        assert_eq!(divide(num, den), Expr::atom(Atom::obs(vs(&[1]), vs(&[2]))));
    }
}
