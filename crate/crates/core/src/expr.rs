//! Tiny arithmetic expressions over grid coordinates.
//!
//! Scenario configs describe boundary and complement data analytically,
//! e.g. `"0.5*sin(pi*x0) + x1^2"`. The grammar is deliberately small:
//! numbers, coordinates `x0..x9` (aliases `x`, `y`), `pi`, the operators
//! `+ - * / ^`, unary minus, parentheses, and a fixed set of functions.
//! Parsing never panics on arbitrary input; failures carry a byte offset.

use crate::{Error, Result};

/// Hard input limits so hostile strings fail fast instead of recursing.
const MAX_SRC_LEN: usize = 4096;
const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tanh,
    Exp,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tanh" => (Func::Tanh, 1),
            "exp" => (Func::Exp, 1),
            "abs" => (Func::Abs, 1),
            "sqrt" => (Func::Sqrt, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Coord(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression; evaluation is pure and total (may yield NaN/inf,
/// which downstream field validation rejects).
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    max_axis: Option<usize>,
    src: String,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        if src.len() > MAX_SRC_LEN {
            return Err(err(0, format!("source longer than {MAX_SRC_LEN} bytes")));
        }
        let mut p = Parser { src: src.as_bytes(), pos: 0, depth: 0, max_axis: None };
        p.skip_ws();
        if p.pos == p.src.len() {
            return Err(err(0, "empty expression"));
        }
        let root = p.sum()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(err(p.pos, format!("unexpected `{}`", p.peek_char())));
        }
        Ok(Expr { root, max_axis: p.max_axis, src: src.to_string() })
    }

    /// Highest coordinate index referenced, if any. The scenario layer
    /// checks this against the grid dimension.
    pub fn max_axis(&self) -> Option<usize> {
        self.max_axis
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    /// Coordinates past `x.len()` were rejected by the caller via
    /// `max_axis`; indexing here is guarded anyway and yields 0.
    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_node(&self.root, x)
    }
}

fn eval_node(n: &Node, x: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Coord(a) => x.get(*a).copied().unwrap_or(0.0),
        Node::Neg(e) => -eval_node(e, x),
        Node::Add(l, r) => eval_node(l, x) + eval_node(r, x),
        Node::Sub(l, r) => eval_node(l, x) - eval_node(r, x),
        Node::Mul(l, r) => eval_node(l, x) * eval_node(r, x),
        Node::Div(l, r) => eval_node(l, x) / eval_node(r, x),
        Node::Pow(l, r) => eval_node(l, x).powf(eval_node(r, x)),
        Node::Call(f, args) => {
            let a = eval_node(&args[0], x);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tanh => a.tanh(),
                Func::Exp => a.exp(),
                Func::Abs => a.abs(),
                Func::Sqrt => a.sqrt(),
                Func::Min => a.min(eval_node(&args[1], x)),
                Func::Max => a.max(eval_node(&args[1], x)),
            }
        }
    }
}

fn err(pos: usize, message: impl Into<String>) -> Error {
    Error::Expr { pos, message: message.into() }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
    max_axis: Option<usize>,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_char(&self) -> char {
        // Errors report the byte at pos; non-ASCII shows as its first byte.
        self.src.get(self.pos).map(|b| *b as char).unwrap_or('?')
    }

    fn eat(&mut self, b: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(err(self.pos, format!("expected `{}`", b as char)))
        }
    }

    fn sum(&mut self) -> Result<Node> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(err(self.pos, "expression nests too deeply"));
        }
        let out = self.sum_body();
        self.depth -= 1;
        out
    }

    fn sum_body(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    // Unary minus binds looser than `^`, so -x0^2 = -(x0^2); the exponent
    // re-enters unary, so 2^-3 parses.
    fn unary(&mut self) -> Result<Node> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(err(self.pos, "expression nests too deeply"));
        }
        let out = self.unary_body();
        self.depth -= 1;
        out
    }

    fn unary_body(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            None => Err(err(self.pos, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(err(self.pos, format!("unexpected `{}`", self.peek_char()))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit() || b == b'.') {
            self.pos += 1;
        }
        if self.peek().is_some_and(|b| b == b'e' || b == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.peek().is_some_and(|b| b == b'+' || b == b'-') {
                self.pos += 1;
            }
            if self.peek().is_some_and(|b| b.is_ascii_digit()) {
                while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // `2e` with no digits: the `e` was not an exponent marker.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Num(v)),
            _ => Err(err(start, format!("bad number `{text}`"))),
        }
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if let Some(axis) = coord_axis(name) {
            self.max_axis = Some(self.max_axis.map_or(axis, |m| m.max(axis)));
            return Ok(Node::Coord(axis));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        if let Some((f, arity)) = Func::lookup(name) {
            self.expect(b'(')?;
            let mut args = vec![self.sum()?];
            while self.eat(b',') {
                args.push(self.sum()?);
            }
            self.expect(b')')?;
            if args.len() != arity {
                return Err(err(
                    start,
                    format!("{name} takes {arity} argument(s), got {}", args.len()),
                ));
            }
            return Ok(Node::Call(f, args));
        }
        Err(err(start, format!("unknown name `{name}`")))
    }
}

fn coord_axis(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        "y" => Some(1),
        _ => {
            let digits = name.strip_prefix('x')?;
            if digits.len() == 1 && digits.as_bytes()[0].is_ascii_digit() {
                Some((digits.as_bytes()[0] - b'0') as usize)
            } else {
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(x)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1+2*3", &[]), 7.0);
        assert_eq!(ev("(1+2)*3", &[]), 9.0);
        assert_eq!(ev("2+3*4^2", &[]), 50.0);
        assert_eq!(ev("2^3^2", &[]), 512.0); // right-associative
        assert_eq!(ev("-2^2", &[]), -4.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
        assert_eq!(ev("7/2/2", &[]), 1.75); // left-associative
        assert_eq!(ev("1 - 2 - 3", &[]), -4.0);
    }

    #[test]
    fn coordinates_and_aliases() {
        assert_eq!(ev("x0^2 + 1", &[2.0]), 5.0);
        assert_eq!(ev("x + 10*y", &[3.0, 4.0]), 43.0);
        let e = Expr::parse("x1 * x3").unwrap();
        assert_eq!(e.max_axis(), Some(3));
        assert_eq!(Expr::parse("2.5").unwrap().max_axis(), None);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("sin(pi/2)", &[]) - 1.0).abs() < 1e-15);
        assert!((ev("cos(0)+exp(0)", &[]) - 2.0).abs() < 1e-15);
        assert_eq!(ev("abs(-3)+sqrt(16)", &[]), 7.0);
        assert_eq!(ev("min(2, 5) + max(2, 5)", &[]), 7.0);
        assert!((ev("tanh(1e3)", &[]) - 1.0).abs() < 1e-15);
        assert_eq!(ev("1.5e2 + 1E-1", &[]), 150.1);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "", "  ", "1+", "(1", "1)", "x_0", "x10", "foo(1)", "sin()", "sin(1,2)",
            "min(1)", "1..2", "2 3", "@", "1e", "x0 x1",
        ] {
            let r = Expr::parse(bad);
            assert!(r.is_err(), "parsed {bad:?}: {r:?}");
        }
        // `1e` has no exponent digits: `e` is then an unknown trailing name.
        match Expr::parse("@!") {
            Err(Error::Expr { pos, .. }) => assert_eq!(pos, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn depth_and_length_limits() {
        let deep = format!("{}1{}", "(".repeat(200), ")".repeat(200));
        assert!(Expr::parse(&deep).is_err());
        let ok = format!("{}1{}", "(".repeat(30), ")".repeat(30));
        assert_eq!(ev(&ok, &[]), 1.0);
        let long = "1+".repeat(3000) + "1";
        assert!(Expr::parse(&long).is_err());
        // Long but flat chains stay within the depth budget.
        let flat = "1+".repeat(1000) + "1";
        assert_eq!(ev(&flat, &[]), 1001.0);
    }

    #[test]
    fn missing_coordinate_reads_zero() {
        assert_eq!(ev("x2 + 1", &[5.0]), 1.0);
    }
}
