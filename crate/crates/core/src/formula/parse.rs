//! A tolerant reader for the three rendering styles.
//!
//! Accepted syntax, mixed freely:
//!
//! * atoms `P(y)`, `P(y|x)`, `P(y \mid do(x), z)`, `P_{x}(y|z)`, with a
//!   domain marker `P^*`, `P^(2)`, `P^{(2)}` or `P^2`;
//! * summations `sum_{a,b}[...]`, `\sum_{a,b} ...` (body runs to the end of
//!   the enclosing product) and `\sum_a ...`;
//! * quotients `(..)/(..)` and `\frac{..}{..}`;
//! * grouping with `(..)`, `[..]`, `{..}`, `\left( .. \right)`;
//! * the literal `1`.
//!
//! Trailing primes on variable names are dropped, and names are matched
//! against the graph ignoring `_`, `{` and `}` if no exact match exists, so
//! `a1`, `a_1` and `a_{1}` all denote vertex `a_1`.

use super::{Atom, Expr, FormulaError};
use crate::graph::SemiMarkovGraph;
use crate::vset::VertexSet;

pub fn parse_expr(text: &str, g: &SemiMarkovGraph) -> Result<Expr, FormulaError> {
    let mut p = Parser { s: text.as_bytes(), pos: 0, g };
    let e = p.product()?;
    p.ws();
    if p.pos < p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

/// Parses a single atom such as `P(y|do(x),w)`.
pub fn parse_atom(text: &str, g: &SemiMarkovGraph) -> Result<Atom, FormulaError> {
    match parse_expr(text, g)? {
        Expr::Atom(a) => Ok(a),
        _ => Err(FormulaError::Parse { pos: 0, msg: "expected a single probability term".into() }),
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    g: &'a SemiMarkovGraph,
}

const SPACING: [&str; 4] = ["\\,", "\\;", "\\!", "\\cdot"];

impl Parser<'_> {
    fn err(&self, msg: &str) -> FormulaError {
        FormulaError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn ws(&mut self) {
        loop {
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            match SPACING.iter().find(|t| self.rest().starts_with(t.as_bytes())) {
                Some(t) => self.pos += t.len(),
                None => break,
            }
        }
    }

    fn rest(&self) -> &[u8] {
        &self.s[self.pos..]
    }

    fn peek_tok(&mut self, tok: &str) -> bool {
        self.ws();
        self.rest().starts_with(tok.as_bytes())
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.peek_tok(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), FormulaError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{tok}`")))
        }
    }

    fn at_product_end(&mut self) -> bool {
        self.ws();
        self.pos >= self.s.len()
            || matches!(self.s[self.pos], b')' | b']' | b'}' | b'/' | b'|' | b',')
            || self.rest().starts_with(b"\\right")
    }

    fn product(&mut self) -> Result<Expr, FormulaError> {
        let mut factors = Vec::new();
        while !self.at_product_end() {
            if self.eat("*") {
                continue;
            }
            let mut f = self.factor()?;
            while self.eat("/") {
                let den = self.factor()?;
                f = Expr::quotient(f, den);
            }
            factors.push(f);
        }
        if factors.is_empty() {
            return Err(self.err("expected an expression"));
        }
        Ok(Expr::product(factors))
    }

    fn factor(&mut self) -> Result<Expr, FormulaError> {
        self.ws();
        if self.eat("\\frac") {
            self.expect("{")?;
            let num = self.product()?;
            self.expect("}")?;
            self.expect("{")?;
            let den = self.product()?;
            self.expect("}")?;
            return Ok(Expr::quotient(num, den));
        }
        if self.eat("\\sum") || self.eat("sum") || self.eat("Σ") {
            return self.summation();
        }
        if self.eat("\\left") {
            let close = self.open_bracket()?;
            let e = self.product()?;
            self.expect("\\right")?;
            self.expect(close)?;
            return Ok(e);
        }
        if self.peek_tok("(") || self.peek_tok("[") || self.peek_tok("{") {
            let close = self.open_bracket()?;
            let e = self.product()?;
            self.expect(close)?;
            return Ok(e);
        }
        if self.eat("1") {
            return Ok(Expr::One);
        }
        if self.eat("P") {
            return self.atom().map(Expr::Atom);
        }
        Err(self.err("expected a probability term, summation, quotient or bracket"))
    }

    fn open_bracket(&mut self) -> Result<&'static str, FormulaError> {
        for (open, close) in [("(", ")"), ("[", "]"), ("\\{", "\\}"), ("{", "}")] {
            if self.eat(open) {
                return Ok(close);
            }
        }
        Err(self.err("expected an opening bracket"))
    }

    fn summation(&mut self) -> Result<Expr, FormulaError> {
        let vars = if self.eat("_") {
            if self.eat("{") {
                let v = self.var_list()?;
                self.expect("}")?;
                v
            } else {
                VertexSet::singleton(self.var()?)
            }
        } else {
            return Err(self.err("expected `_` after summation sign"));
        };
        let body = if self.eat("[") {
            let b = self.product()?;
            self.expect("]")?;
            b
        } else {
            self.product()?
        };
        Ok(Expr::sum(vars, body))
    }

    fn atom(&mut self) -> Result<Atom, FormulaError> {
        let mut domain = 0;
        if self.eat("^") {
            domain = self.domain()?;
        }
        let mut do_set = VertexSet::EMPTY;
        if self.eat("_") {
            if self.eat("{") {
                do_set = self.var_list()?;
                self.expect("}")?;
            } else {
                do_set = VertexSet::singleton(self.var()?);
            }
        }
        self.expect("(")?;
        let outcomes = self.var_list()?;
        let mut given = VertexSet::EMPTY;
        if self.eat("|") || self.eat("\\mid") {
            loop {
                if self.eat("do(") {
                    do_set |= self.var_list()?;
                    self.expect(")")?;
                } else {
                    given.insert(self.var()?);
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect(")")?;
        let a = Atom { domain, do_set, outcomes, given };
        if !a.is_well_formed() {
            return Err(self.err("probability term has overlapping or empty argument sets"));
        }
        Ok(a)
    }

    fn domain(&mut self) -> Result<u32, FormulaError> {
        if self.rest().starts_with(b"*") {
            self.pos += 1;
            return Ok(0);
        }
        let close = if self.eat("{") { Some("}") } else { None };
        let d = if self.rest().starts_with(b"*") {
            self.pos += 1;
            0
        } else if self.eat("(") {
            let d = self.number()?;
            self.expect(")")?;
            d
        } else {
            self.number()?
        };
        if let Some(c) = close {
            self.expect(c)?;
        }
        Ok(d)
    }

    fn number(&mut self) -> Result<u32, FormulaError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("expected a domain number"))
    }

    fn var_list(&mut self) -> Result<VertexSet, FormulaError> {
        let mut set = VertexSet::EMPTY;
        loop {
            set.insert(self.var()?);
            if !self.eat(",") {
                return Ok(set);
            }
        }
    }

    fn var(&mut self) -> Result<usize, FormulaError> {
        self.ws();
        let start = self.pos;
        let word = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
        while self.pos < self.s.len() && word(self.s[self.pos]) {
            self.pos += 1;
        }
        // `a_{1}` subscripts
        if self.pos > start && self.s[self.pos - 1] == b'_' && self.rest().starts_with(b"{") {
            let close = self.rest().iter().position(|&c| c == b'}').map(|i| self.pos + i);
            match close {
                Some(end) => self.pos = end + 1,
                None => return Err(self.err("unterminated subscript")),
            }
        }
        let raw = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii slice").to_string();
        while self.pos < self.s.len() && self.s[self.pos] == b'\'' {
            self.pos += 1;
        }
        if raw.is_empty() {
            return Err(self.err("expected a variable name"));
        }
        self.resolve(&raw).ok_or_else(|| FormulaError::Parse { pos: start, msg: format!("unknown variable `{raw}`") })
    }

    fn resolve(&self, raw: &str) -> Option<usize> {
        if let Some(v) = self.g.id(raw) {
            return Some(v);
        }
        let norm = |s: &str| s.chars().filter(|c| !matches!(c, '_' | '{' | '}')).collect::<String>();
        let key = norm(raw);
        let mut hits = self.g.vertices().iter().filter(|&v| norm(self.g.name(v)) == key);
        match (hits.next(), hits.next()) {
            (Some(v), None) => Some(v),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{expr_equal, render, Style};

    const FIG1: &str = "x_1 -> y_2, x_1 -> y_1, w -> y_1, w -> y_2, z -> y_1, x_2 -> y_2, z -> y_2, \
                        z -> x_2, w <-> z, z <-> x_2, y_1 <-> x_1";

    #[test]
    fn causaleffect_string() {
        let g = SemiMarkovGraph::parse(FIG1).unwrap();
        let e = parse_expr("\\sum_{w,z}P_{x_2}(y_2|x_1,w,z)P(w,z)P_{x_1}(y_1|w,z)", &g).unwrap();
        let Expr::Sum { vars, body } = &e else { panic!("{e:?}") };
        assert_eq!(*vars, g.set_of(&["w", "z"]).unwrap());
        assert!(matches!(&**body, Expr::Product(fs) if fs.len() == 3));
        let back = parse_expr(&render(&e, &g, Style::CausalEffect), &g).unwrap();
        assert!(expr_equal(&e, &back));
    }

    #[test]
    fn styles_round_trip() {
        let g = SemiMarkovGraph::parse("a_1 -> x, x -> y, a_1 -> y").unwrap();
        for text in [
            "sum_{a_1}[P^(2)(y|do(x),a_1) P^*(a_1)]",
            "\\sum_{a1} P^{(2)}(y \\mid do(x), a1) \\cdot P(a_{1})",
            "(P(y,x|a_1))/(P(x|a_1))",
            "\\frac{P(y,x)}{\\sum_{y'}P(y',x)}",
            "sum_{a_1}[P(a_1) sum_{a_1'}[P(x|a_1')]]",
        ] {
            let e = parse_expr(text, &g).unwrap_or_else(|err| panic!("{text}: {err}"));
            for style in [Style::Text, Style::Latex, Style::CausalEffect] {
                if style == Style::CausalEffect && e.atoms().iter().any(|a| a.domain > 0) {
                    continue;
                }
                let shown = render(&e, &g, style);
                let back = parse_expr(&shown, &g).unwrap_or_else(|err| panic!("{shown}: {err}"));
                assert_eq!(back, e, "{text} via {shown}");
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        let g = SemiMarkovGraph::parse("x -> y").unwrap();
        assert!(parse_expr("P(q)", &g).is_err());
        assert!(parse_expr("P(y|y)", &g).is_err());
        assert!(parse_expr("P(y", &g).is_err());
        assert!(parse_expr("", &g).is_err());
    }
}
