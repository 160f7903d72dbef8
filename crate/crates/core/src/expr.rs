//! Arithmetic expressions embedded in test scripts, e.g. `(1.1*ubatt)`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := number | ident | '(' expr ')'
//! number := '-'? digit+ ('.' digit+)?
//! ident  := [a-z_][a-z0-9_]*
//! ```
//!
//! Numbers always use a decimal point. Variables are resolved against an
//! [`Env`] at evaluation time, so a script can be parsed and checked without
//! knowing anything about the stand that will run it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Expression tree.
///
/// Equality is structural over the operator tree: grouping parentheses
/// recorded by [`Expr::Paren`] do not take part in comparisons.
#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Var(String),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Paren(Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn paren(inner: Expr) -> Self {
        Expr::Paren(Box::new(inner))
    }

    /// `value * var`, wrapped in parentheses: the shape used for bounds
    /// relative to a scale variable.
    pub fn scaled(value: f64, var: &str) -> Self {
        Expr::paren(Expr::binary(
            BinOp::Mul,
            Expr::Const(value),
            Expr::Var(var.to_string()),
        ))
    }

    fn strip(&self) -> &Expr {
        let mut e = self;
        while let Expr::Paren(inner) = e {
            e = inner;
        }
        e
    }

    /// Variables referenced by the expression, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => {
                    if !out.contains(&v.as_str()) {
                        out.push(v);
                    }
                }
                Expr::Binary { lhs, rhs, .. } => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
                Expr::Paren(inner) => walk(inner, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self.strip(), other.strip()) {
            (Expr::Const(a), Expr::Const(b)) => a == b,
            (Expr::Var(a), Expr::Var(b)) => a == b,
            (
                Expr::Binary { op, lhs, rhs },
                Expr::Binary {
                    op: op2,
                    lhs: lhs2,
                    rhs: rhs2,
                },
            ) => op == op2 && lhs == lhs2 && rhs == rhs2,
            _ => false,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_expr(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expression parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(String),
    #[error("division by zero")]
    DivideByZero,
}

/// Variable bindings used to evaluate expressions, e.g. `ubatt = 12.0` (volts).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Env {
    vars: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("env line {line}: {message}")]
pub struct EnvError {
    pub line: usize,
    pub message: String,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.vars.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses a stand environment file: one `key=value` per line, `#`
    /// comments and blank lines ignored. Keys are lowercased.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let mut env = Env::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EnvError {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let key = key.trim().to_ascii_lowercase();
            if !is_ident(&key) {
                return Err(err(format!("invalid variable name {key:?}")));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid number {:?}", value.trim())))?;
            if !value.is_finite() {
                return Err(err(format!("non-finite value for {key}")));
            }
            env.set(&key, value);
        }
        Ok(env)
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => self.error("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.error("expected ')'");
                }
                self.pos += 1;
                Ok(Expr::paren(inner))
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => self.number(),
            Some(c) if c.is_ascii_lowercase() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_lowercase()
                        || self.src[self.pos].is_ascii_digit()
                        || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                Ok(Expr::Var(name.to_string()))
            }
            Some(c) => self.error(format!("unexpected character {:?}", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        if self.src[self.pos] == b'-' {
            self.pos += 1;
        }
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        if digits(self) == 0 {
            return self.error("expected digit");
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            if digits(self) == 0 {
                return self.error("expected digit after decimal point");
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Const(v)),
            Err(_) => Err(ParseError {
                offset: start,
                message: format!("invalid number {text:?}"),
            }),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    if parser.peek().is_none() {
        return parser.error("empty expression");
    }
    let e = parser.expr()?;
    match parser.peek() {
        None => Ok(e),
        Some(b')') => parser.error("unbalanced ')'"),
        Some(c) => parser.error(format!("unexpected character {:?}", c as char)),
    }
}

pub fn eval_expr(e: &Expr, env: &Env) -> Result<f64, EvalError> {
    match e {
        Expr::Const(v) => Ok(*v),
        Expr::Var(name) => env
            .get(name)
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Paren(inner) => eval_expr(inner, env),
        Expr::Binary { op, lhs, rhs } => {
            let a = eval_expr(lhs, env)?;
            let b = eval_expr(rhs, env)?;
            Ok(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivideByZero);
                    }
                    a / b
                }
            })
        }
    }
}

/// Canonical text: every binary node is parenthesized, no whitespace,
/// numbers in shortest round-trip decimal form.
pub fn render_expr(e: &Expr) -> String {
    let mut out = String::new();
    render_into(e, &mut out);
    out
}

fn render_into(e: &Expr, out: &mut String) {
    match e {
        Expr::Const(v) => out.push_str(&format_number(*v)),
        Expr::Var(name) => out.push_str(name),
        Expr::Paren(inner) => render_into(inner, out),
        Expr::Binary { op, lhs, rhs } => {
            out.push('(');
            render_into(lhs, out);
            out.push(op.symbol());
            render_into(rhs, out);
            out.push(')');
        }
    }
}

/// Shortest decimal-point rendering of a finite number that parses back to
/// the same value.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        // folds -0 into 0
        return "0".to_string();
    }
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(name: &str) -> Expr {
        Expr::Var(name.into())
    }

    #[test]
    fn parses_scaled_bound() {
        let e = parse_expr("(1.1*ubatt)").unwrap();
        match &e {
            Expr::Paren(inner) => assert_eq!(
                **inner,
                Expr::binary(BinOp::Mul, Expr::Const(1.1), var("ubatt"))
            ),
            other => panic!("expected parenthesized expression, got {other:?}"),
        }
    }

    #[test]
    fn parses_constant() {
        assert!(matches!(parse_expr("5").unwrap(), Expr::Const(v) if v == 5.0));
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = parse_expr("1.1*").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_expr("").is_err());
        assert!(parse_expr("   ").is_err());
        assert_eq!(parse_expr("(1.1*ubat").unwrap_err().offset, 9);
        assert!(parse_expr("1.1)").is_err());
        assert!(parse_expr("UBATT").is_err());
        assert!(parse_expr("1.").is_err());
    }

    #[test]
    fn evaluates_bounds() {
        let env = Env::new().with("ubatt", 12.0);
        let hi = eval_expr(&parse_expr("(1.1*ubatt)").unwrap(), &env).unwrap();
        let lo = eval_expr(&parse_expr("(0.7*ubatt)").unwrap(), &env).unwrap();
        assert!((hi - 13.2).abs() < 1e-12);
        assert!((lo - 8.4).abs() < 1e-12);
    }

    #[test]
    fn eval_errors() {
        let env = Env::new().with("ubatt", 12.0);
        assert_eq!(
            eval_expr(&parse_expr("ubatt/0").unwrap(), &env),
            Err(EvalError::DivideByZero)
        );
        assert_eq!(
            eval_expr(&parse_expr("2*vref").unwrap(), &env),
            Err(EvalError::Unbound("vref".into()))
        );
    }

    #[test]
    fn precedence() {
        let env = Env::new();
        assert_eq!(eval_expr(&parse_expr("1+2*3").unwrap(), &env), Ok(7.0));
        assert_eq!(eval_expr(&parse_expr("(1+2)*3").unwrap(), &env), Ok(9.0));
        assert_eq!(eval_expr(&parse_expr("8-2-1").unwrap(), &env), Ok(5.0));
        assert_eq!(eval_expr(&parse_expr("8/2/2").unwrap(), &env), Ok(2.0));
        assert_eq!(eval_expr(&parse_expr("1--2").unwrap(), &env), Ok(3.0));
    }

    #[test]
    fn renders_canonically() {
        assert_eq!(render_expr(&Expr::scaled(1.1, "ubatt")), "(1.1*ubatt)");
        assert_eq!(render_expr(&Expr::Const(5000.0)), "5000");
        assert_eq!(
            render_expr(&parse_expr("(a + b) * c").unwrap()),
            "((a+b)*c)"
        );
        assert_eq!(render_expr(&Expr::scaled(0.0, "ubatt")), "(0*ubatt)");
    }

    #[test]
    fn env_file() {
        let env = Env::parse("# stand\nUBATT = 12.0\n\nvref=5\n").unwrap();
        assert_eq!(env.get("ubatt"), Some(12.0));
        assert_eq!(env.get("vref"), Some(5.0));
        assert_eq!(Env::parse("ubatt 12").unwrap_err().line, 1);
        assert!(Env::parse("ubatt=twelve").is_err());
    }
}
