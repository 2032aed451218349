//! Symbolic integer expressions for grid shapes and coordinate maps.
//!
//! Expressions are small trees over constants, named symbols and the
//! operators `+ * // % min max`. They are evaluated against a
//! [`ShapeBinding`] that assigns non-negative integers to symbols.
//! The textual form (see [`SymExpr::parse`]) is what workload-spec files
//! store, and `Display` prints a form that parses back to the same tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymExpr {
    Const(i64),
    Sym(String),
    Add(Box<SymExpr>, Box<SymExpr>),
    Mul(Box<SymExpr>, Box<SymExpr>),
    FloorDiv(Box<SymExpr>, Box<SymExpr>),
    Mod(Box<SymExpr>, Box<SymExpr>),
    Min(Box<SymExpr>, Box<SymExpr>),
    Max(Box<SymExpr>, Box<SymExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("negative value {value} in `{expr}`")]
    Negative { expr: String, value: i64 },
    #[error("integer overflow in `{0}`")]
    Overflow(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

/// Assignment of concrete values to shape symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeBinding(pub BTreeMap<String, i64>);

impl ShapeBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: i64) -> Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: i64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.0.get(name).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses `n=3,b=2` style bindings. An empty string gives an empty binding.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut out = ShapeBinding::new();
        let mut offset = 0;
        for part in text.split(',') {
            let trimmed = part.trim();
            if trimmed.is_empty() {
                offset += part.len() + 1;
                continue;
            }
            let (name, value) = trimmed.split_once('=').ok_or_else(|| ParseError {
                offset,
                message: format!("expected `name=value`, got `{trimmed}`"),
            })?;
            let value: i64 = value.trim().parse().map_err(|_| ParseError {
                offset,
                message: format!("bad integer in `{trimmed}`"),
            })?;
            out.insert(name.trim(), value);
            offset += part.len() + 1;
        }
        Ok(out)
    }
}

impl fmt::Display for ShapeBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl SymExpr {
    pub fn constant(v: i64) -> Self {
        SymExpr::Const(v)
    }

    pub fn sym(name: impl Into<String>) -> Self {
        SymExpr::Sym(name.into())
    }

    /// Task coordinate symbol for axis `axis` (`t0`, `t1`, ...).
    pub fn coord(axis: usize) -> Self {
        SymExpr::Sym(format!("t{axis}"))
    }

    pub fn add(self, rhs: SymExpr) -> Self {
        SymExpr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: SymExpr) -> Self {
        SymExpr::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn floordiv(self, rhs: SymExpr) -> Self {
        SymExpr::FloorDiv(Box::new(self), Box::new(rhs))
    }

    pub fn modulo(self, rhs: SymExpr) -> Self {
        SymExpr::Mod(Box::new(self), Box::new(rhs))
    }

    pub fn min(self, rhs: SymExpr) -> Self {
        SymExpr::Min(Box::new(self), Box::new(rhs))
    }

    pub fn max(self, rhs: SymExpr) -> Self {
        SymExpr::Max(Box::new(self), Box::new(rhs))
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Parser::new(text).parse_all()
    }

    pub fn as_const(&self) -> Option<i64> {
        match self {
            SymExpr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            SymExpr::Const(_) => {}
            SymExpr::Sym(s) => {
                out.insert(s.clone());
            }
            SymExpr::Add(a, b)
            | SymExpr::Mul(a, b)
            | SymExpr::FloorDiv(a, b)
            | SymExpr::Mod(a, b)
            | SymExpr::Min(a, b)
            | SymExpr::Max(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
        }
    }

    pub fn eval(&self, binding: &ShapeBinding) -> Result<i64, EvalError> {
        self.eval_with(&|name| binding.get(name))
    }

    /// Evaluates with an arbitrary symbol lookup. Every node's value must be
    /// non-negative.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Result<i64, EvalError> {
        let value = match self {
            SymExpr::Const(v) => *v,
            SymExpr::Sym(s) => lookup(s).ok_or_else(|| EvalError::Unbound(s.clone()))?,
            SymExpr::Add(a, b) => {
                let (x, y) = (a.eval_with(lookup)?, b.eval_with(lookup)?);
                x.checked_add(y).ok_or_else(|| EvalError::Overflow(self.to_string()))?
            }
            SymExpr::Mul(a, b) => {
                let (x, y) = (a.eval_with(lookup)?, b.eval_with(lookup)?);
                x.checked_mul(y).ok_or_else(|| EvalError::Overflow(self.to_string()))?
            }
            SymExpr::FloorDiv(a, b) => {
                let (x, y) = (a.eval_with(lookup)?, b.eval_with(lookup)?);
                if y == 0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                x.div_euclid(y)
            }
            SymExpr::Mod(a, b) => {
                let (x, y) = (a.eval_with(lookup)?, b.eval_with(lookup)?);
                if y == 0 {
                    return Err(EvalError::DivisionByZero(self.to_string()));
                }
                x.rem_euclid(y)
            }
            SymExpr::Min(a, b) => a.eval_with(lookup)?.min(b.eval_with(lookup)?),
            SymExpr::Max(a, b) => a.eval_with(lookup)?.max(b.eval_with(lookup)?),
        };
        if value < 0 {
            return Err(EvalError::Negative { expr: self.to_string(), value });
        }
        Ok(value)
    }

    /// Folds constant subtrees. No other rewriting is done.
    pub fn fold_constants(&self) -> SymExpr {
        let folded = match self {
            SymExpr::Const(_) | SymExpr::Sym(_) => return self.clone(),
            SymExpr::Add(a, b) => SymExpr::Add(Box::new(a.fold_constants()), Box::new(b.fold_constants())),
            SymExpr::Mul(a, b) => SymExpr::Mul(Box::new(a.fold_constants()), Box::new(b.fold_constants())),
            SymExpr::FloorDiv(a, b) => {
                SymExpr::FloorDiv(Box::new(a.fold_constants()), Box::new(b.fold_constants()))
            }
            SymExpr::Mod(a, b) => SymExpr::Mod(Box::new(a.fold_constants()), Box::new(b.fold_constants())),
            SymExpr::Min(a, b) => SymExpr::Min(Box::new(a.fold_constants()), Box::new(b.fold_constants())),
            SymExpr::Max(a, b) => SymExpr::Max(Box::new(a.fold_constants()), Box::new(b.fold_constants())),
        };
        if folded.free_symbols().is_empty() {
            if let Ok(v) = folded.eval(&ShapeBinding::new()) {
                return SymExpr::Const(v);
            }
        }
        folded
    }

    fn precedence(&self) -> u8 {
        match self {
            SymExpr::Add(..) => 1,
            SymExpr::Mul(..) | SymExpr::FloorDiv(..) | SymExpr::Mod(..) => 2,
            _ => 3,
        }
    }
}

/// Free symbols of an expression.
pub fn free_symbols(expr: &SymExpr) -> BTreeSet<String> {
    expr.free_symbols()
}

/// Evaluates `expr` under `binding`.
pub fn eval_expr(expr: &SymExpr, binding: &ShapeBinding) -> Result<i64, EvalError> {
    expr.eval(binding)
}

impl From<i64> for SymExpr {
    fn from(v: i64) -> Self {
        SymExpr::Const(v)
    }
}

impl From<&str> for SymExpr {
    fn from(name: &str) -> Self {
        SymExpr::Sym(name.to_string())
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Operators are left-associative, so a right operand at the same
        // precedence level needs parentheses to keep the tree shape.
        fn side(f: &mut fmt::Formatter<'_>, e: &SymExpr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        let binop = |f: &mut fmt::Formatter<'_>, a: &SymExpr, op: &str, b: &SymExpr, prec: u8| {
            side(f, a, prec)?;
            write!(f, " {op} ")?;
            side(f, b, prec + 1)
        };
        match self {
            SymExpr::Const(v) if *v < 0 => write!(f, "({v})"),
            SymExpr::Const(v) => write!(f, "{v}"),
            SymExpr::Sym(s) => f.write_str(s),
            SymExpr::Add(a, b) => binop(f, a, "+", b, 1),
            SymExpr::Mul(a, b) => binop(f, a, "*", b, 2),
            SymExpr::FloorDiv(a, b) => binop(f, a, "//", b, 2),
            SymExpr::Mod(a, b) => binop(f, a, "%", b, 2),
            SymExpr::Min(a, b) => write!(f, "min({a}, {b})"),
            SymExpr::Max(a, b) => write!(f, "max({a}, {b})"),
        }
    }
}

impl FromStr for SymExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SymExpr::parse(s)
    }
}

impl Serialize for SymExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SymExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(v) => Ok(SymExpr::Const(v)),
            Raw::Text(s) => SymExpr::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(i64),
    Ident(String),
    Plus,
    Star,
    SlashSlash,
    Percent,
    LParen,
    RParen,
    Comma,
    // Only valid directly inside parentheses, as in `(-3)`.
    Minus,
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
    err: Option<ParseError>,
}

impl Parser {
    fn new(text: &str) -> Self {
        let mut tokens = Vec::new();
        let mut err = None;
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            let start = i;
            match c {
                ' ' | '\t' | '\n' | '\r' => {
                    i += 1;
                    continue;
                }
                '0'..='9' => {
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    match text[start..i].parse::<i64>() {
                        Ok(v) => tokens.push((start, Token::Int(v))),
                        Err(_) => {
                            err.get_or_insert(ParseError {
                                offset: start,
                                message: "integer literal out of range".into(),
                            });
                        }
                    }
                    continue;
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                        i += 1;
                    }
                    tokens.push((start, Token::Ident(text[start..i].to_string())));
                    continue;
                }
                '+' => tokens.push((start, Token::Plus)),
                '*' => tokens.push((start, Token::Star)),
                '%' => tokens.push((start, Token::Percent)),
                '(' => tokens.push((start, Token::LParen)),
                ')' => tokens.push((start, Token::RParen)),
                ',' => tokens.push((start, Token::Comma)),
                '-' => tokens.push((start, Token::Minus)),
                '/' => {
                    if bytes.get(i + 1) == Some(&b'/') {
                        tokens.push((start, Token::SlashSlash));
                        i += 1;
                    } else {
                        err.get_or_insert(ParseError {
                            offset: start,
                            message: "use `//` for floor division".into(),
                        });
                    }
                }
                other => {
                    err.get_or_insert(ParseError {
                        offset: start,
                        message: format!("unexpected character `{other}`"),
                    });
                }
            }
            i += 1;
        }
        Parser { tokens, pos: 0, len: text.len(), err }
    }

    fn parse_all(mut self) -> Result<SymExpr, ParseError> {
        if let Some(e) = self.err.take() {
            return Err(e);
        }
        let expr = self.parse_sum()?;
        if let Some((off, tok)) = self.tokens.get(self.pos) {
            return Err(ParseError { offset: *off, message: format!("unexpected token {tok:?}") });
        }
        Ok(expr)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.len)
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError { offset: self.offset(), message: format!("expected {want:?}") })
        }
    }

    fn parse_sum(&mut self) -> Result<SymExpr, ParseError> {
        let mut lhs = self.parse_product()?;
        while self.peek() == Some(&Token::Plus) {
            self.pos += 1;
            let rhs = self.parse_product()?;
            lhs = lhs.add(rhs);
        }
        Ok(lhs)
    }

    fn parse_product(&mut self) -> Result<SymExpr, ParseError> {
        let mut lhs = self.parse_atom()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => Token::Star,
                Some(Token::SlashSlash) => Token::SlashSlash,
                Some(Token::Percent) => Token::Percent,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_atom()?;
            lhs = match op {
                Token::Star => lhs.mul(rhs),
                Token::SlashSlash => lhs.floordiv(rhs),
                _ => lhs.modulo(rhs),
            };
        }
        Ok(lhs)
    }

    fn parse_atom(&mut self) -> Result<SymExpr, ParseError> {
        let offset = self.offset();
        match self.tokens.get(self.pos).map(|(_, t)| t.clone()) {
            Some(Token::Int(v)) => {
                self.pos += 1;
                Ok(SymExpr::Const(v))
            }
            Some(Token::Ident(name)) if name == "min" || name == "max" => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let a = self.parse_sum()?;
                self.expect(Token::Comma)?;
                let b = self.parse_sum()?;
                self.expect(Token::RParen)?;
                Ok(if name == "min" { a.min(b) } else { a.max(b) })
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                Ok(SymExpr::Sym(name))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                if self.peek() == Some(&Token::Minus) {
                    self.pos += 1;
                    let off = self.offset();
                    let Some(Token::Int(v)) = self.peek().cloned() else {
                        return Err(ParseError { offset: off, message: "expected integer after `-`".into() });
                    };
                    self.pos += 1;
                    self.expect(Token::RParen)?;
                    return Ok(SymExpr::Const(-v));
                }
                let e = self.parse_sum()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(tok) => Err(ParseError { offset, message: format!("unexpected token {tok:?}") }),
            None => Err(ParseError { offset, message: "unexpected end of expression".into() }),
        }
    }
}
