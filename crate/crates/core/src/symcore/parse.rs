//! Recursive-descent parser for arithmetic expressions.
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := atom ('^' exponent)?
//! atom    := number | ident | '(' sum ')'
//! ```
//!
//! Exponents are constant: a signed number or a parenthesized constant
//! expression. Identifiers may end in apostrophes (`w'`, `w''`).

use thiserror::Error;

use super::expr::Expr;
use super::rational::{parse_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = parse_rational(&text).ok_or_else(|| ParseError { column: col, message: format!("bad number `{text}`") })?;
            out.push((Tok::Num(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            while i < chars.len() && chars[i] == '\'' {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else {
            return Err(ParseError { column: col, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.end_col)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { column: self.col(), message: message.into() })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.product()?];
        loop {
            if self.eat('+') {
                terms.push(self.product()?);
            } else if self.eat('-') {
                terms.push(Expr::Neg(Box::new(self.product()?)));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Add(terms) })
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        let mut factors: Vec<Expr> = Vec::new();
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                if factors.is_empty() {
                    factors.push(acc);
                }
                factors.push(rhs);
                acc = Expr::num(0);
            } else if self.eat('/') {
                let rhs = self.unary()?;
                let lhs = if factors.is_empty() {
                    acc
                } else {
                    let f = std::mem::take(&mut factors);
                    Expr::Mul(f)
                };
                acc = Expr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(if factors.is_empty() { acc } else { Expr::Mul(factors) })
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let col = self.col();
        let exp = self.exponent()?;
        let q = exp
            .canonical()
            .ok()
            .and_then(|c| c.constant_value())
            .ok_or_else(|| ParseError { column: col, message: "exponent must be a constant".into() })?;
        Ok(Expr::Pow(Box::new(base), q))
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        if self.eat('+') {
            return self.exponent();
        }
        // Right-associative: a^b^c = a^(b^c).
        self.power()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Expr::Sym(s))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of expression"),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, end_col: src.chars().count() + 1 };
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::rational::ratio;

    #[test]
    fn precedence() {
        let e = parse_expr("-x^2 + a*b/c").unwrap();
        let f = parse_expr("(-(x^2)) + ((a*b)/c)").unwrap();
        assert_eq!(e.canonical().unwrap(), f.canonical().unwrap());
        let e = parse_expr("a/b*c").unwrap();
        let f = parse_expr("(a/b)*c").unwrap();
        assert_eq!(e.canonical().unwrap(), f.canonical().unwrap());
    }

    #[test]
    fn decimal_exponent() {
        match parse_expr("G^1.7").unwrap() {
            Expr::Pow(_, q) => assert_eq!(q, ratio(17, 10)),
            other => panic!("{other:?}"),
        }
        match parse_expr("G^(-3/2)").unwrap() {
            Expr::Pow(_, q) => assert_eq!(q, ratio(-3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn primes_in_identifiers() {
        assert_eq!(parse_expr("w'' + w'").unwrap().symbols().into_iter().collect::<Vec<_>>(), vec!["w'", "w''"]);
    }

    #[test]
    fn errors_carry_columns() {
        assert_eq!(parse_expr("x + * y").unwrap_err().column, 5);
        assert_eq!(parse_expr("(x + y").unwrap_err().column, 7);
        assert_eq!(parse_expr("x $ y").unwrap_err().column, 3);
        assert_eq!(parse_expr("x^y").unwrap_err().column, 3);
    }
}
