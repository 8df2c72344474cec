//! S-expression text form, e.g. `(+ (* 2 (^ x1 2)) th1)`.
//!
//! Operators: `+` and `*` (n-ary), `^` (base and non-negative integer
//! literal), `/`, `sqrt`, and `-` (unary negation or left-associative
//! difference). Constants print in shortest round-trip form, so printing and
//! re-parsing any expression reproduces it exactly.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{Expr, Node, Symbol};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected `{found}` at byte {pos}")]
    UnexpectedToken { pos: usize, found: String },
    #[error("unknown operator `{op}` at byte {pos}")]
    UnknownOperator { pos: usize, op: String },
    #[error("operator `{op}` at byte {pos} takes {expected} operand(s), got {got}")]
    Arity { pos: usize, op: String, expected: &'static str, got: usize },
    #[error("exponent at byte {pos} must be a non-negative integer literal")]
    BadExponent { pos: usize },
    #[error("invalid number `{text}` at byte {pos}")]
    BadNumber { pos: usize, text: String },
    #[error("trailing input at byte {pos}")]
    TrailingInput { pos: usize },
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c == c.trunc() && c.abs() < 1e15 {
        write!(f, "{}", c as i64)
    } else {
        // Debug gives the shortest representation that round-trips
        write!(f, "{c:?}")
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e.node() {
        Node::Const(c) => write_const(f, *c),
        Node::Sym(s) => write!(f, "{s}"),
        Node::Add(xs) | Node::Mul(xs) => {
            f.write_str(if matches!(e.node(), Node::Add(_)) { "(+" } else { "(*" })?;
            for x in xs {
                f.write_str(" ")?;
                write_expr(f, x)?;
            }
            f.write_str(")")
        }
        Node::Pow(b, k) => {
            f.write_str("(^ ")?;
            write_expr(f, b)?;
            write!(f, " {k})")
        }
        Node::Div(a, b) => {
            f.write_str("(/ ")?;
            write_expr(f, a)?;
            f.write_str(" ")?;
            write_expr(f, b)?;
            f.write_str(")")
        }
        Node::Sqrt(a) => {
            f.write_str("(sqrt ")?;
            write_expr(f, a)?;
            f.write_str(")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(s: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'(' {
            out.push((i, Tok::Open));
            i += 1;
        } else if c == b')' {
            out.push((i, Tok::Close));
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' && bytes[i] != b')' {
                i += 1;
            }
            out.push((start, Tok::Atom(&s[start..i])));
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
}

fn looks_numeric(t: &str) -> bool {
    let t = t.strip_prefix(['-', '+']).unwrap_or(t);
    t.starts_with(|c: char| c.is_ascii_digit() || c == '.')
}

fn is_identifier(t: &str) -> bool {
    let mut chars = t.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<(usize, Tok<'a>), ParseError> {
        let t = self.toks.get(self.pos).cloned().ok_or(ParseError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn atom(pos: usize, t: &str) -> Result<Expr, ParseError> {
        if looks_numeric(t) {
            return match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Expr::constant(v)),
                _ => Err(ParseError::BadNumber { pos, text: t.to_string() }),
            };
        }
        if is_identifier(t) {
            return Ok(Expr::symbol(Symbol::parse(t)));
        }
        Err(ParseError::UnexpectedToken { pos, found: t.to_string() })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let (pos, tok) = self.next()?;
        match tok {
            Tok::Atom(t) => Self::atom(pos, t),
            Tok::Close => Err(ParseError::UnexpectedToken { pos, found: ")".into() }),
            Tok::Open => {
                let (op_pos, op) = self.next()?;
                let op = match op {
                    Tok::Atom(op) => op,
                    Tok::Open => return Err(ParseError::UnexpectedToken { pos: op_pos, found: "(".into() }),
                    Tok::Close => return Err(ParseError::UnexpectedToken { pos: op_pos, found: ")".into() }),
                };
                if op == "^" {
                    return self.power(op_pos);
                }
                let mut args = Vec::new();
                loop {
                    match self.toks.get(self.pos) {
                        None => return Err(ParseError::UnexpectedEnd),
                        Some((_, Tok::Close)) => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => args.push(self.expr()?),
                    }
                }
                let arity = |expected: &'static str| ParseError::Arity {
                    pos: op_pos,
                    op: op.to_string(),
                    expected,
                    got: args.len(),
                };
                match op {
                    "+" if !args.is_empty() => Ok(Expr::sum(args)),
                    "*" if !args.is_empty() => Ok(Expr::product(args)),
                    "+" | "*" => Err(arity("at least 1")),
                    "-" => match args.len() {
                        0 => Err(arity("at least 1")),
                        1 => Ok(-&args[0]),
                        _ => {
                            let mut it = args.into_iter();
                            let first = it.next().unwrap();
                            Ok(Expr::sum(std::iter::once(first).chain(it.map(|a| -a))))
                        }
                    },
                    "/" if args.len() == 2 => Ok(args[0].div(&args[1])),
                    "/" => Err(arity("2")),
                    "sqrt" if args.len() == 1 => Ok(args[0].sqrt()),
                    "sqrt" => Err(arity("1")),
                    _ => Err(ParseError::UnknownOperator { pos: op_pos, op: op.to_string() }),
                }
            }
        }
    }

    fn power(&mut self, op_pos: usize) -> Result<Expr, ParseError> {
        let base = self.expr()?;
        let (kpos, ktok) = self.next()?;
        let k = match ktok {
            Tok::Atom(t) => t.parse::<u32>().map_err(|_| ParseError::BadExponent { pos: kpos })?,
            _ => return Err(ParseError::BadExponent { pos: kpos }),
        };
        match self.next()? {
            (_, Tok::Close) => Ok(base.powi(k)),
            _ => Err(ParseError::Arity { pos: op_pos, op: "^".into(), expected: "2", got: 3 }),
        }
    }
}

impl Expr {
    /// Parses the S-expression text form.
    pub fn parse(s: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { toks: tokenize(s), pos: 0 };
        let e = p.expr()?;
        if let Some((pos, _)) = p.toks.get(p.pos) {
            return Err(ParseError::TrailingInput { pos: *pos });
        }
        Ok(e)
    }
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Expr, ParseError> {
        Expr::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Point;

    #[test]
    fn prints_canonical_text() {
        let e = 2.0 * Expr::state(0).powi(2) + Expr::estimate(0);
        assert_eq!(e.to_string(), "(+ (* 2 (^ x1 2)) th1)");
    }

    #[test]
    fn round_trip_is_exact() {
        let e = (Expr::state(0) * 0.1 + Expr::named("mu")).div(&(1.0 + Expr::estimate(1).square())).sqrt()
            - 1e-30 * Expr::state(2)
            + 123456789012345680.0;
        let back = Expr::parse(&e.to_string()).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.to_string(), e.to_string());
    }

    #[test]
    fn minus_sugar() {
        let e = Expr::parse("(- x1 x2 1)").unwrap();
        assert_eq!(e.eval(&Point::new(&[5.0, 2.0], &[])).unwrap(), 2.0);
        let n = Expr::parse("(- th1)").unwrap();
        assert_eq!(n.eval(&Point::new(&[], &[3.0])).unwrap(), -3.0);
        assert_eq!(Expr::parse("-2.5").unwrap().as_const(), Some(-2.5));
    }

    #[test]
    fn reports_errors() {
        assert_eq!(Expr::parse("(+ x1"), Err(ParseError::UnexpectedEnd));
        assert!(matches!(Expr::parse("(foo x1)"), Err(ParseError::UnknownOperator { .. })));
        assert!(matches!(Expr::parse("(^ x1 1.5)"), Err(ParseError::BadExponent { .. })));
        assert!(matches!(Expr::parse("(/ x1)"), Err(ParseError::Arity { .. })));
        assert!(matches!(Expr::parse("x1 x2"), Err(ParseError::TrailingInput { .. })));
        assert!(matches!(Expr::parse("1e999"), Err(ParseError::BadNumber { .. })));
    }
}
