//! Canonical forms for structural comparison of expressions.

use super::{divide, sum_simplified, Expr};

/// Normalizes an expression without changing its value:
///
/// * products are flattened, `1` factors dropped and factors sorted,
/// * a summation inside a product is hoisted to the product level when its
///   variables are not free in the sibling factors, and nested sums merge,
/// * the marginalization rewrites of [`super::marginal`] and the quotient
///   rewrites of [`super::divide`] are applied everywhere.
///
/// The result is a fixpoint: canonicalizing it again returns it unchanged.
pub fn canonicalize(e: &Expr) -> Expr {
    let mut cur = once(e);
    // every pass either shrinks the expression or moves sums outward, so a
    // small bound suffices; it guards against an oscillating rewrite
    for _ in 0..64 {
        let next = once(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
    cur
}

/// Structural equality after canonicalization. Variables are vertex ids, so
/// bound variables of the two sides already agree by name.
pub fn expr_equal(a: &Expr, b: &Expr) -> bool {
    canonicalize(a) == canonicalize(b)
}

fn once(e: &Expr) -> Expr {
    match e {
        Expr::One | Expr::Atom(_) => e.clone(),
        Expr::Sum { vars, body } => sum_simplified(*vars, once(body)),
        Expr::Quotient { num, den } => divide(once(num), once(den)),
        Expr::Product(fs) => {
            let factors: Vec<Expr> = fs.iter().map(once).collect();
            let mut flat = match Expr::product(factors) {
                Expr::Product(flat) => flat,
                single => return single,
            };
            for i in 0..flat.len() {
                let Expr::Sum { vars, .. } = &flat[i] else { continue };
                let vars = *vars;
                let clash = flat
                    .iter()
                    .enumerate()
                    .any(|(j, f)| j != i && !f.free_vars().is_disjoint(vars));
                if clash {
                    continue;
                }
                let Expr::Sum { body, .. } = flat.remove(i) else { unreachable!() };
                flat.push(*body);
                return Expr::sum(vars, Expr::product(flat));
            }
            flat.sort();
            Expr::Product(flat)
        }
    }
}
