//! Text, LaTeX, causaleffect-style and JSON renderings.

use std::collections::HashMap;

use serde_json::{json, Value};

use super::{Atom, Expr};
use crate::graph::SemiMarkovGraph;
use crate::vset::VertexSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// `P^(1)(y|do(x),z)`, `sum_{z,w}[...]`, `(..)/(..)`.
    Text,
    /// `P^{(1)}(y \mid do(x), z)`, `\sum_{z, w}`, `\frac{..}{..}`.
    Latex,
    /// The notation of the R package causaleffect: `P_{x}(y|z)`, no domains.
    CausalEffect,
}

/// Renders `e` with vertex names from `g`. Variables inside a set follow the
/// global topological order; a summation variable that shadows a variable
/// already in scope is marked with primes.
pub fn render(e: &Expr, g: &SemiMarkovGraph, style: Style) -> String {
    let mut r = Renderer { g, style, primes: HashMap::new() };
    for v in e.free_vars().iter() {
        r.primes.insert(v, 0);
    }
    let mut out = String::new();
    r.expr(e, &mut out);
    out
}

struct Renderer<'a> {
    g: &'a SemiMarkovGraph,
    style: Style,
    primes: HashMap<usize, usize>,
}

impl Renderer<'_> {
    fn name(&self, v: usize) -> String {
        let n = self.primes.get(&v).copied().unwrap_or(0);
        format!("{}{}", self.g.name(v), "'".repeat(n))
    }

    fn list(&self, set: VertexSet) -> Vec<String> {
        self.g.order().sorted(set).into_iter().map(|v| self.name(v)).collect()
    }

    fn sep(&self) -> &'static str {
        match self.style {
            Style::Latex => ", ",
            _ => ",",
        }
    }

    fn atom(&self, a: &Atom, out: &mut String) {
        let sep = self.sep();
        out.push('P');
        match self.style {
            Style::Text if a.domain > 0 => out.push_str(&format!("^({})", a.domain)),
            Style::Latex if a.domain > 0 => out.push_str(&format!("^{{({})}}", a.domain)),
            _ => {}
        }
        let mut cond = Vec::new();
        if !a.do_set.is_empty() {
            let d = self.list(a.do_set).join(sep);
            match self.style {
                Style::CausalEffect => out.push_str(&format!("_{{{d}}}")),
                _ => cond.push(format!("do({d})")),
            }
        }
        cond.extend(self.list(a.given));
        out.push('(');
        out.push_str(&self.list(a.outcomes).join(sep));
        if !cond.is_empty() {
            out.push_str(match self.style {
                Style::Latex => " \\mid ",
                _ => "|",
            });
            out.push_str(&cond.join(sep));
        }
        out.push(')');
    }

    fn expr(&mut self, e: &Expr, out: &mut String) {
        match e {
            Expr::One => out.push('1'),
            Expr::Atom(a) => self.atom(a, out),
            Expr::Sum { vars, body } => {
                let saved: Vec<(usize, Option<usize>)> =
                    vars.iter().map(|v| (v, self.primes.get(&v).copied())).collect();
                for &(v, prev) in &saved {
                    self.primes.insert(v, prev.map_or(0, |p| p + 1));
                }
                let names = self.list(*vars).join(self.sep());
                match self.style {
                    Style::Text => {
                        out.push_str(&format!("sum_{{{names}}}["));
                        self.expr(body, out);
                        out.push(']');
                    }
                    Style::Latex => {
                        out.push_str(&format!("\\sum_{{{names}}} "));
                        self.expr(body, out);
                    }
                    Style::CausalEffect => {
                        out.push_str(&format!("\\sum_{{{names}}}"));
                        self.expr(body, out);
                    }
                }
                for (v, prev) in saved {
                    match prev {
                        Some(p) => self.primes.insert(v, p),
                        None => self.primes.remove(&v),
                    };
                }
            }
            Expr::Product(fs) => {
                for (i, f) in fs.iter().enumerate() {
                    if i > 0 && self.style != Style::CausalEffect {
                        out.push(' ');
                    }
                    // an unbracketed sum extends to the end of the product
                    let bracket = self.style != Style::Text && i + 1 < fs.len() && matches!(f, Expr::Sum { .. });
                    if bracket {
                        out.push_str("\\left(");
                    }
                    self.expr(f, out);
                    if bracket {
                        out.push_str("\\right)");
                    }
                }
            }
            Expr::Quotient { num, den } => match self.style {
                Style::Text => {
                    out.push('(');
                    self.expr(num, out);
                    out.push_str(")/(");
                    self.expr(den, out);
                    out.push(')');
                }
                _ => {
                    out.push_str("\\frac{");
                    self.expr(num, out);
                    out.push_str("}{");
                    self.expr(den, out);
                    out.push('}');
                }
            },
        }
    }
}

/// JSON form: `{"atom": {...}}`, `{"sum": {"vars", "body"}}`, `{"prod": [...]}`,
/// `{"quot": {"num", "den"}}` and `1` for the empty product. Sets are name
/// lists in topological order.
pub fn expr_to_json(e: &Expr, g: &SemiMarkovGraph) -> Value {
    let names = |s: VertexSet| -> Value {
        Value::from(g.order().sorted(s).into_iter().map(|v| g.name(v).to_string()).collect::<Vec<_>>())
    };
    match e {
        Expr::One => json!(1),
        Expr::Atom(a) => json!({"atom": {
            "domain": a.domain,
            "do": names(a.do_set),
            "outcomes": names(a.outcomes),
            "given": names(a.given),
        }}),
        Expr::Sum { vars, body } => json!({"sum": {"vars": names(*vars), "body": expr_to_json(body, g)}}),
        Expr::Product(fs) => json!({"prod": fs.iter().map(|f| expr_to_json(f, g)).collect::<Vec<_>>()}),
        Expr::Quotient { num, den } => {
            json!({"quot": {"num": expr_to_json(num, g), "den": expr_to_json(den, g)}})
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_styles() {
        let g = SemiMarkovGraph::parse("x -> z, z -> y").unwrap();
        let s = |n: &[&str]| g.set_of(n).unwrap();
        let e = Expr::sum(
            s(&["z"]),
            Expr::product(vec![
                Expr::atom(Atom::obs(s(&["y"]), s(&["x", "z"]))),
                Expr::atom(Atom::new(2, s(&["z"]), s(&["x"]), VertexSet::EMPTY)),
            ]),
        );
        assert_eq!(render(&e, &g, Style::Text), "sum_{z}[P(y|x,z) P^(2)(z|do(x))]");
        assert_eq!(render(&e, &g, Style::Latex), "\\sum_{z} P(y \\mid x, z) P^{(2)}(z \\mid do(x))");
        assert_eq!(render(&e, &g, Style::CausalEffect), "\\sum_{z}P(y|x,z)P_{x}(z)");
    }

    #[test]
    fn shadowed_binders_get_primes() {
        let g = SemiMarkovGraph::parse("a -> b, a -> x").unwrap();
        let s = |n: &[&str]| g.set_of(n).unwrap();
        let inner = Expr::sum(s(&["a"]), Expr::atom(Atom::obs(s(&["a"]), s(&["x"]))));
        let e = Expr::Sum {
            vars: s(&["a"]),
            body: Box::new(Expr::product(vec![Expr::atom(Atom::obs(s(&["b"]), s(&["a"]))), inner])),
        };
        assert_eq!(render(&e, &g, Style::Text), "sum_{a}[P(b|a) sum_{a'}[P(a'|x)]]");
    }

    #[test]
    fn json_shape() {
        let g = SemiMarkovGraph::parse("x -> y").unwrap();
        let s = |n: &[&str]| g.set_of(n).unwrap();
        let e = Expr::atom(Atom::obs(s(&["y"]), s(&["x"])));
        let v = expr_to_json(&e, &g);
        assert_eq!(v["atom"]["given"], json!(["x"]));
        assert_eq!(v["atom"]["domain"], json!(0));
    }
}
