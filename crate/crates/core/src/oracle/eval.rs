//! Numeric evaluation of expressions against information-set tables, and
//! verification against enumerated ground truth.

use std::cell::Cell;
use std::collections::HashMap;

use rayon::prelude::*;

use super::scm::{advance, random_scm, DiscreteScm, DistTable};
use super::OracleError;
use crate::formula::{Atom, Expr};
use crate::graph::SemiMarkovGraph;
use crate::surrogate::{resolvable, InfoSet};
use crate::vset::VertexSet;

/// One information-set member as computable from a model: for every
/// assignment of the member's intervention, the conditional distribution of
/// its outcomes given its conditioning set.
#[derive(Debug, Clone)]
pub struct MemberTable {
    pub member: Atom,
    do_vars: Vec<usize>,
    /// One conditional table per do-assignment (first do variable fastest),
    /// over outcomes ∪ given; entries are `P(outcomes | do, given)`.
    tables: Vec<DistTable>,
}

/// The tables of every information-set member, and nothing else.
#[derive(Debug, Clone)]
pub struct InfoTables {
    pub members: Vec<MemberTable>,
    arities: Vec<usize>,
}

impl InfoTables {
    pub fn build(scm: &DiscreteScm, info: &InfoSet) -> Result<Self, OracleError> {
        let mut members = Vec::with_capacity(info.members.len());
        for m in &info.members {
            let do_vars: Vec<usize> = m.do_set.iter().collect();
            let do_ar: Vec<usize> = do_vars.iter().map(|&v| scm.arities[v]).collect();
            let mut vals = vec![0usize; do_vars.len()];
            let mut tables = Vec::new();
            loop {
                let assign: Vec<(usize, usize)> = do_vars.iter().copied().zip(vals.iter().copied()).collect();
                let joint = scm.interventional(&assign)?.marginal(m.outcomes | m.given);
                tables.push(conditional(&joint, m.given));
                if !advance(&mut vals, &do_ar) {
                    break;
                }
            }
            members.push(MemberTable { member: m.clone(), do_vars, tables });
        }
        Ok(InfoTables { members, arities: scm.arities.clone() })
    }
}

/// Divides a joint over `outcomes ∪ given` by its marginal over `given`;
/// zero-probability contexts get conditional 0.
fn conditional(joint: &DistTable, given: VertexSet) -> DistTable {
    let den = joint.marginal(given);
    let mut out = joint.clone();
    let mut assign = vec![0usize; joint.vars.iter().max().map_or(0, |&m| m + 1)];
    let mut vals = vec![0usize; joint.vars.len()];
    for p in out.probs.iter_mut() {
        for (k, &v) in joint.vars.iter().enumerate() {
            assign[v] = vals[k];
        }
        let d = den.get(&assign);
        *p = if d > 0.0 { *p / d } else { 0.0 };
        advance(&mut vals, &joint.arities);
    }
    out
}

/// Evaluates expressions under a fixed set of tables; caches atom values.
pub struct Evaluator<'a> {
    tables: &'a InfoTables,
    resolved: HashMap<Atom, usize>,
    memo: HashMap<(Atom, Vec<usize>), f64>,
    /// Number of 0/0 quotients met so far.
    pub zero_denominators: Cell<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(tables: &'a InfoTables) -> Self {
        Evaluator { tables, resolved: HashMap::new(), memo: HashMap::new(), zero_denominators: Cell::new(0) }
    }

    /// Value of `e` with free variables taken from `assign` (indexed by
    /// vertex id).
    pub fn eval(&mut self, e: &Expr, assign: &mut [usize]) -> Result<f64, OracleError> {
        match e {
            Expr::One => Ok(1.0),
            Expr::Atom(a) => self.atom(a, assign),
            Expr::Product(fs) => {
                let mut acc = 1.0;
                for f in fs {
                    acc *= self.eval(f, assign)?;
                    if acc == 0.0 {
                        break;
                    }
                }
                Ok(acc)
            }
            Expr::Quotient { num, den } => {
                let d = self.eval(den, assign)?;
                let n = self.eval(num, assign)?;
                if d == 0.0 {
                    self.zero_denominators.set(self.zero_denominators.get() + 1);
                    Ok(0.0)
                } else {
                    Ok(n / d)
                }
            }
            Expr::Sum { vars, body } => {
                let vs: Vec<usize> = vars.iter().collect();
                let ar: Vec<usize> = vs.iter().map(|&v| self.tables.arities[v]).collect();
                let saved: Vec<usize> = vs.iter().map(|&v| assign[v]).collect();
                let mut vals = vec![0usize; vs.len()];
                let mut total = 0.0;
                loop {
                    for (k, &v) in vs.iter().enumerate() {
                        assign[v] = vals[k];
                    }
                    total += self.eval(body, assign)?;
                    if !advance(&mut vals, &ar) {
                        break;
                    }
                }
                for (k, &v) in vs.iter().enumerate() {
                    assign[v] = saved[k];
                }
                Ok(total)
            }
        }
    }

    fn atom(&mut self, a: &Atom, assign: &mut [usize]) -> Result<f64, OracleError> {
        let key_vals: Vec<usize> = a.variables().iter().map(|v| assign[v]).collect();
        let key = (a.clone(), key_vals);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let idx = match self.resolved.get(a) {
            Some(&i) => i,
            None => {
                let i = self
                    .tables
                    .members
                    .iter()
                    .position(|m| resolvable(a, &m.member))
                    .ok_or_else(|| OracleError::Unresolvable(format!("{a:?}")))?;
                self.resolved.insert(a.clone(), i);
                i
            }
        };
        let mt = &self.tables.members[idx];
        let mut t = 0;
        let mut stride = 1;
        for &v in &mt.do_vars {
            t += assign[v] * stride;
            stride *= self.tables.arities[v];
        }
        let table = &mt.tables[t];
        // P(a.out | do, a.given) = P(a.out ∪ extra | do, m.given) / P(extra | do, m.given)
        let extra = a.given.minus(mt.member.given);
        let num = sum_out(table, mt.member.outcomes.minus(a.outcomes | extra), assign);
        let den = sum_out(table, mt.member.outcomes.minus(extra), assign);
        let value = if den == 0.0 {
            self.zero_denominators.set(self.zero_denominators.get() + 1);
            0.0
        } else {
            num / den
        };
        self.memo.insert(key, value);
        Ok(value)
    }
}

/// Sum of table entries over all values of `vars`, the other variables
/// fixed by `assign`.
fn sum_out(table: &DistTable, vars: VertexSet, assign: &mut [usize]) -> f64 {
    let vs: Vec<usize> = vars.iter().collect();
    let ar: Vec<usize> = vs.iter().map(|&v| table.arities[table.vars.iter().position(|&u| u == v).expect("table var")]).collect();
    let saved: Vec<usize> = vs.iter().map(|&v| assign[v]).collect();
    let mut vals = vec![0usize; vs.len()];
    let mut total = 0.0;
    loop {
        for (k, &v) in vs.iter().enumerate() {
            assign[v] = vals[k];
        }
        total += table.get(assign);
        if !advance(&mut vals, &ar) {
            break;
        }
    }
    for (k, &v) in vs.iter().enumerate() {
        assign[v] = saved[k];
    }
    total
}

/// Evaluates `e` once under `tables`, `assign` giving the free variables.
pub fn eval_expr(e: &Expr, tables: &InfoTables, assign: &[usize]) -> Result<f64, OracleError> {
    let mut a = assign.to_vec();
    Evaluator::new(tables).eval(e, &mut a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub max_abs_err: f64,
    pub n_models: usize,
    pub pass: bool,
    pub zero_denominators: usize,
}

/// Options for [`verify_with`].
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub n_models: usize,
    pub tol: f64,
    /// Models use seeds `first_seed .. first_seed + n_models`.
    pub first_seed: u64,
    pub arity: usize,
    pub latent_arity: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { n_models: 20, tol: 1e-9, first_seed: 0, arity: 2, latent_arity: 2 }
    }
}

/// Checks `e` against `P(y | do(x))` on `n_models` random models (seeds
/// `0..n_models`), evaluating `e` from the tables of `info` only.
pub fn verify(
    g: &SemiMarkovGraph,
    x: VertexSet,
    y: VertexSet,
    info: &InfoSet,
    e: &Expr,
    n_models: usize,
    tol: f64,
) -> Result<VerifyReport, OracleError> {
    verify_with(g, x, y, info, e, VerifyOptions { n_models, tol, ..VerifyOptions::default() })
}

pub fn verify_with(
    g: &SemiMarkovGraph,
    x: VertexSet,
    y: VertexSet,
    info: &InfoSet,
    e: &Expr,
    opts: VerifyOptions,
) -> Result<VerifyReport, OracleError> {
    // Free variables outside the query (a surrogate experiment's do-set, or
    // an observation inserted by rule 1) are enumerated: the value must not
    // matter.
    let free = e.free_vars();
    let extra = free.minus(x | y);
    let per_model: Vec<Result<(f64, usize), OracleError>> = (0..opts.n_models as u64)
        .into_par_iter()
        .map(|k| {
            let scm = random_scm(g, opts.first_seed + k, opts.arity, opts.latent_arity)?;
            model_error(&scm, x, y, extra, info, e)
        })
        .collect();
    let mut max_abs_err: f64 = 0.0;
    let mut zero_denominators = 0;
    for r in per_model {
        let (err, zeros) = r?;
        max_abs_err = max_abs_err.max(err);
        zero_denominators += zeros;
    }
    Ok(VerifyReport { max_abs_err, n_models: opts.n_models, pass: max_abs_err <= opts.tol, zero_denominators })
}

fn model_error(
    scm: &DiscreteScm,
    x: VertexSet,
    y: VertexSet,
    extra: VertexSet,
    info: &InfoSet,
    e: &Expr,
) -> Result<(f64, usize), OracleError> {
    let tables = InfoTables::build(scm, info)?;
    let mut ev = Evaluator::new(&tables);
    let xs: Vec<usize> = x.iter().collect();
    let x_ar: Vec<usize> = xs.iter().map(|&v| scm.arities[v]).collect();
    let mut x_vals = vec![0usize; xs.len()];
    let mut assign = vec![0usize; scm.arities.len()];
    let es: Vec<usize> = extra.iter().collect();
    let e_ar: Vec<usize> = es.iter().map(|&v| scm.arities[v]).collect();
    let mut worst: f64 = 0.0;
    loop {
        let do_assign: Vec<(usize, usize)> = xs.iter().copied().zip(x_vals.iter().copied()).collect();
        let truth = scm.interventional(&do_assign)?.marginal(y);
        for &(v, val) in &do_assign {
            assign[v] = val;
        }
        let ys: Vec<usize> = truth.vars.clone();
        let mut y_vals = vec![0usize; ys.len()];
        loop {
            for (k, &v) in ys.iter().enumerate() {
                assign[v] = y_vals[k];
            }
            let exact = truth.get(&assign);
            let mut extra_vals = vec![0usize; es.len()];
            loop {
                for (k, &v) in es.iter().enumerate() {
                    assign[v] = extra_vals[k];
                }
                let est = ev.eval(e, &mut assign)?;
                worst = worst.max((est - exact).abs());
                if !advance(&mut extra_vals, &e_ar) {
                    break;
                }
            }
            if !advance(&mut y_vals, &truth.arities) {
                break;
            }
        }
        if !advance(&mut x_vals, &x_ar) {
            break;
        }
    }
    Ok((worst, ev.zero_denominators.get()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_expr;
    use crate::surrogate::{information_set, SurrogateQuery};

    fn mediator() -> SurrogateQuery {
        let g = SemiMarkovGraph::parse("x -> z, z -> y, x <-> z").unwrap();
        SurrogateQuery::from_names(g, &["x"], &["y"], &[(&["x"], &["z"])]).unwrap()
    }

    #[test]
    fn mediator_formula_verifies() {
        let q = mediator();
        let info = information_set(&q).unwrap();
        let e = parse_expr("sum_{z}[P(y|x,z) P(z|do(x))]", &q.graph).unwrap();
        let r = verify(&q.graph, q.x, q.y, &info, &e, 20, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        let wrong = parse_expr("P(y|x)", &q.graph).unwrap();
        let r = verify(&q.graph, q.x, q.y, &info, &wrong, 5, 1e-9).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn chain_conditional_is_causal() {
        let g = SemiMarkovGraph::parse("x -> y").unwrap();
        let info = InfoSet { members: vec![Atom::obs(g.vertices(), VertexSet::EMPTY)] };
        let e = parse_expr("P(y|x)", &g).unwrap();
        let s = |n: &[&str]| g.set_of(n).unwrap();
        assert!(verify(&g, s(&["x"]), s(&["y"]), &info, &e, 5, 1e-9).unwrap().pass);
    }

    #[test]
    fn missing_experiment_is_reported() {
        let q = mediator();
        let info = InfoSet { members: vec![Atom::obs(q.graph.vertices(), VertexSet::EMPTY)] };
        let scm = random_scm(&q.graph, 0, 2, 2).unwrap();
        let tables = InfoTables::build(&scm, &info).unwrap();
        let e = parse_expr("P(z|do(x))", &q.graph).unwrap();
        assert!(matches!(eval_expr(&e, &tables, &[0; 3]), Err(OracleError::Unresolvable(_))));
    }
}
