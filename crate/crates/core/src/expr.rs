//! A small arithmetic expression language used for data functions in
//! configuration files: source terms, obstacles, kernel multipliers,
//! variable exponents and bounded kernel shapes.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right-associative
//! atom    := number | ident | ident '(' sum (',' sum)* ')' | '(' sum ')'
//! ```
//!
//! Functions: `abs min max sqrt exp log sin cos`. The constant `pi` is
//! predefined. The typographic minus `−` is accepted as `-`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Min,
    Max,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 2,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>, usize),
    Bin(BinOp, Box<Node>, Box<Node>, usize),
    Call(Func, Vec<Node>, usize),
}

/// A parsed expression bound to an ordered list of variable names.
#[derive(Clone)]
pub struct Expression {
    source: Arc<str>,
    vars: Arc<[String]>,
    root: Arc<Node>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", &*self.source)
    }
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.vars == other.vars
    }
}

impl Expression {
    /// Parses `text`, resolving identifiers against `vars`.
    pub fn parse(text: &str, vars: &[&str]) -> Result<Self> {
        let mut p = Parser {
            src: text,
            pos: 0,
            vars,
        };
        let root = p.sum()?;
        p.skip_ws();
        if p.pos < text.len() {
            return Err(p.expected(&["operator", "end of input"]));
        }
        Ok(Expression {
            source: Arc::from(text),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            root: Arc::new(root),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    /// True when the expression does not reference any variable.
    pub fn is_constant(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Num(_) => true,
                Node::Var(_) => false,
                Node::Neg(a, _) => walk(a),
                Node::Bin(_, a, b, _) => walk(a) && walk(b),
                Node::Call(_, args, _) => args.iter().all(walk),
            }
        }
        walk(&self.root)
    }

    /// True when variable `name` appears in the expression.
    pub fn references(&self, name: &str) -> bool {
        let Some(slot) = self.vars.iter().position(|v| v == name) else {
            return false;
        };
        fn walk(n: &Node, slot: usize) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(i) => *i == slot,
                Node::Neg(a, _) => walk(a, slot),
                Node::Bin(_, a, b, _) => walk(a, slot) || walk(b, slot),
                Node::Call(_, args, _) => args.iter().any(|a| walk(a, slot)),
            }
        }
        walk(&self.root, slot)
    }

    /// Fast evaluation; domain violations surface as NaN or infinities.
    pub fn eval(&self, values: &[f64]) -> f64 {
        eval_node(&self.root, values)
    }

    /// Evaluation that reports the byte offset of the first operation
    /// producing a non-finite value.
    pub fn try_eval(&self, values: &[f64]) -> Result<f64> {
        try_eval_node(&self.root, values)
    }
}

fn eval_node(n: &Node, v: &[f64]) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(i) => v[*i],
        Node::Neg(a, _) => -eval_node(a, v),
        Node::Bin(op, a, b, _) => {
            let (a, b) = (eval_node(a, v), eval_node(b, v));
            apply_bin(*op, a, b)
        }
        Node::Call(f, args, _) => match f {
            Func::Min => args
                .iter()
                .map(|a| eval_node(a, v))
                .fold(f64::INFINITY, f64::min),
            Func::Max => args
                .iter()
                .map(|a| eval_node(a, v))
                .fold(f64::NEG_INFINITY, f64::max),
            _ => apply_unary(*f, eval_node(&args[0], v)),
        },
    }
}

fn try_eval_node(n: &Node, v: &[f64]) -> Result<f64> {
    let (x, offset) = match n {
        Node::Num(x) => return Ok(*x),
        Node::Var(i) => return Ok(v[*i]),
        Node::Neg(a, off) => (-try_eval_node(a, v)?, *off),
        Node::Bin(op, a, b, off) => {
            let (a, b) = (try_eval_node(a, v)?, try_eval_node(b, v)?);
            (apply_bin(*op, a, b), *off)
        }
        Node::Call(f, args, off) => {
            let xs = args
                .iter()
                .map(|a| try_eval_node(a, v))
                .collect::<Result<Vec<_>>>()?;
            let x = match f {
                Func::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
                Func::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                _ => apply_unary(*f, xs[0]),
            };
            (x, *off)
        }
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Expression {
            offset,
            message: format!("evaluation produced non-finite value {x}"),
        })
    }
}

fn apply_bin(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => a.powf(b),
    }
}

fn apply_unary(f: Func, x: f64) -> f64 {
    match f {
        Func::Abs => x.abs(),
        Func::Sqrt => x.sqrt(),
        Func::Exp => x.exp(),
        Func::Log => x.ln(),
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Min | Func::Max => unreachable!("variadic functions handled by caller"),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    /// Next significant character with `−` folded to `-`.
    fn peek_tok(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek().map(|c| if c == '\u{2212}' { '-' } else { c })
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn expected(&self, what: &[&str]) -> Error {
        let found = match self.src[self.pos..].chars().next() {
            Some(c) => format!("'{c}'"),
            None => "end of input".to_string(),
        };
        Error::Expression {
            offset: self.pos,
            message: format!("expected one of [{}], found {found}", what.join(", ")),
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek_tok() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let at = self.pos;
            self.bump();
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs), at);
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek_tok() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            let at = self.pos;
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs), at);
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_tok() == Some('-') {
            let at = self.pos;
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner), at));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_tok() == Some('^') {
            let at = self.pos;
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp), at));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        const ATOM: &[&str] = &["number", "identifier", "'('", "'-'"];
        match self.peek_tok() {
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.ident(),
            Some('(') => {
                self.bump();
                let inner = self.sum()?;
                if self.peek_tok() != Some(')') {
                    return Err(self.expected(&["')'", "operator"]));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.expected(ATOM)),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = &self.src[start..end];
        let value = text.parse::<f64>().map_err(|_| Error::Expression {
            offset: start,
            message: format!("malformed number literal '{text}'"),
        })?;
        self.pos = end;
        Ok(Node::Num(value))
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        let name = &self.src[start..end];
        self.pos = end;
        if self.peek_tok() == Some('(') {
            let func = Func::from_name(name).ok_or_else(|| Error::Expression {
                offset: start,
                message: format!(
                    "unknown function '{name}'; expected one of [abs, min, max, sqrt, exp, log, sin, cos]"
                ),
            })?;
            self.bump();
            let mut args = vec![self.sum()?];
            loop {
                match self.peek_tok() {
                    Some(',') => {
                        self.bump();
                        args.push(self.sum()?);
                    }
                    Some(')') => {
                        self.bump();
                        break;
                    }
                    _ => return Err(self.expected(&["','", "')'", "operator"])),
                }
            }
            if !func.arity_ok(args.len()) {
                return Err(Error::Expression {
                    offset: start,
                    message: format!("wrong number of arguments ({}) for '{name}'", args.len()),
                });
            }
            return Ok(Node::Call(func, args, start));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        match self.vars.iter().position(|v| *v == name) {
            Some(slot) => Ok(Node::Var(slot)),
            None => Err(Error::Expression {
                offset: start,
                message: format!(
                    "unknown identifier '{name}'; expected one of [{}]",
                    self.vars.join(", ")
                ),
            }),
        }
    }
}
