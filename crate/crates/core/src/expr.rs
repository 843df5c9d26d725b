//! A small arithmetic expression language for closed-form data.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are `t`, `u`, `r` (an alias of `t`), the constants `pi` and `e`,
//! and the functions `abs`, `exp`, `sin`, `cos`, `atan`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Abs,
    Exp,
    Sin,
    Cos,
    Atan,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Abs => x.abs(),
            Func::Exp => x.exp(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Atan => x.atan(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    T,
    U,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, t: f64, u: f64) -> f64 {
        match self {
            Node::Num(x) => *x,
            Node::T => t,
            Node::U => u,
            Node::Neg(a) => -a.eval(t, u),
            Node::Add(a, b) => a.eval(t, u) + b.eval(t, u),
            Node::Sub(a, b) => a.eval(t, u) - b.eval(t, u),
            Node::Mul(a, b) => a.eval(t, u) * b.eval(t, u),
            Node::Div(a, b) => a.eval(t, u) / b.eval(t, u),
            Node::Pow(a, b) => {
                let base = a.eval(t, u);
                match b.as_ref() {
                    Node::Num(k) if k.fract() == 0.0 && k.abs() <= 64.0 => base.powi(*k as i32),
                    other => base.powf(other.eval(t, u)),
                }
            }
            Node::Call(f, a) => f.apply(a.eval(t, u)),
        }
    }

    fn uses(&self, var: &Node) -> bool {
        match self {
            Node::Num(_) => false,
            Node::T | Node::U => self == var,
            Node::Neg(a) | Node::Call(_, a) => a.uses(var),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.uses(var) || b.uses(var)
            }
        }
    }
}

/// A parsed expression in the variables `t` and `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input in `{source}` at token {}",
                parser.pos + 1
            )));
        }
        Ok(Self { source: source.to_string(), root })
    }

    #[inline]
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        self.root.eval(t, u)
    }

    pub fn uses_t(&self) -> bool {
        self.root.uses(&Node::T)
    }

    pub fn uses_u(&self) -> bool {
        self.root.uses(&Node::U)
    }

    /// The value if the expression mentions neither variable.
    pub fn as_constant(&self) -> Option<f64> {
        if self.uses_t() || self.uses_u() {
            None
        } else {
            Some(self.eval(0.0, 0.0))
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let value = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number `{text}` in `{src}`")))?;
            out.push(Token::Num(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Token::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Token::RParen);
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    if out.is_empty() {
        return Err(Error::Expr("empty expression".into()));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Token::Num(x)) => Ok(Node::Num(x)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "abs" => Some(Func::Abs),
                    "exp" => Some(Func::Exp),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "atan" | "arctan" => Some(Func::Atan),
                    _ => None,
                };
                if let Some(func) = func {
                    match self.next() {
                        Some(Token::LParen) => {}
                        _ => return Err(Error::Expr(format!("`{name}` must be followed by `(`"))),
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                match name.as_str() {
                    "t" | "r" => Ok(Node::T),
                    "u" => Ok(Node::U),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expr(format!("unknown identifier `{name}`"))),
                }
            }
            Some(tok) => Err(Error::Expr(format!("unexpected token {tok:?}"))),
            None => Err(Error::Expr("unexpected end of expression".into())),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next() {
            Some(Token::RParen) => Ok(()),
            _ => Err(Error::Expr("missing `)`".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, t: f64, u: f64) -> f64 {
        Expr::parse(src).unwrap().eval(t, u)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("8 / 2 / 2", 0.0, 0.0), 2.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-u^2", 0.0, 3.0), -9.0);
        assert_eq!(ev("2 * -u", 0.0, 3.0), -6.0);
        assert_eq!(ev("1e-3 * 2E2", 0.0, 0.0), 0.2);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("exp(-u^2)", 0.0, 1.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((ev("cos(2*pi*t)", 0.25, 0.0)).abs() < 1e-15);
        assert_eq!(ev("abs(u)", 0.0, -3.0), 3.0);
        assert!((ev("atan(u)", 0.0, 1.0) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((ev("e", 0.0, 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("r + t", 2.0, 0.0), 4.0);
    }

    #[test]
    fn example_formulas() {
        let q = Expr::parse("(exp(u)+1)*u^2/(u^2+1)").unwrap();
        assert!((q.eval(0.0, 1.0) - (std::f64::consts::E + 1.0) / 2.0).abs() < 1e-14);
        assert!(q.uses_u() && !q.uses_t());
        assert_eq!(Expr::parse("2*pi").unwrap().as_constant(), Some(2.0 * std::f64::consts::PI));
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "1 +", "foo(u)", "x", "(1", "1 2", "sin u", "3 $ 4"] {
            assert!(Expr::parse(bad).is_err(), "`{bad}` should not parse");
        }
    }
}
