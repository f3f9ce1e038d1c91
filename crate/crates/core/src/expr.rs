//! Minimal arithmetic expressions over the variables `x`, `t` and `u`.
//!
//! Grammar (usual precedence, `^` binds tightest and is right associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 'pi' | 'x' | 't' | 'u' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | tanh | sqrt
//! ```
//!
//! Exponents must be constant. Expressions keep their source text so that a
//! parsed config can be echoed back byte for byte.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diffcore::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Pow(Box<Node>, f64),
}

impl Node {
    fn eval<T: Real>(&self, x: T, t: T, u: T) -> T {
        match self {
            Node::Num(c) => T::cst(*c),
            Node::Var(Var::X) => x,
            Node::Var(Var::T) => t,
            Node::Var(Var::U) => u,
            Node::Neg(a) => -a.eval(x, t, u),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, t, u), b.eval(x, t, u));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(x, t, u);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Sqrt => a.sqrt(),
                }
            }
            Node::Pow(a, p) => {
                let a = a.eval(x, t, u);
                if p.fract() == 0.0 && p.abs() <= f64::from(i32::MAX) {
                    a.powi(*p as i32)
                } else {
                    a.powf(*p)
                }
            }
        }
    }

    fn uses(&self, v: Var) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(w) => *w == v,
            Node::Neg(a) | Node::Call(_, a) | Node::Pow(a, _) => a.uses(v),
            Node::Bin(_, a, b) => a.uses(v) || b.uses(v),
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Clone)]
pub struct Expr {
    src: String,
    node: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.src)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let node = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self { src: src.to_string(), node })
    }

    pub fn constant(c: f64) -> Self {
        Self { src: format!("{c:?}"), node: Node::Num(c) }
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval<T: Real>(&self, x: T, t: T, u: T) -> T {
        self.node.eval(x, t, u)
    }

    pub fn eval_f64(&self, x: f64, t: f64, u: f64) -> f64 {
        self.node.eval(x, t, u)
    }

    pub fn uses(&self, v: Var) -> bool {
        self.node.uses(v)
    }

    /// The constant value, if the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.uses(Var::X) || self.uses(Var::T) || self.uses(Var::U) {
            None
        } else {
            Some(self.eval_f64(0.0, 0.0, 0.0))
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.src)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => Expr::parse(&s).map_err(serde::de::Error::custom),
            Raw::Num(c) => Ok(Expr::constant(c)),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Expr { column: self.pos + 1, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let at = self.pos;
            let exponent = self.unary()?;
            if exponent.uses(Var::X) || exponent.uses(Var::T) || exponent.uses(Var::U) {
                return Err(Error::Expr { column: at + 1, message: "exponent must be constant".into() });
            }
            let p = exponent.eval(0.0, 0.0, 0.0);
            return Ok(Node::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                let func = match ident {
                    "x" => return Ok(Node::Var(Var::X)),
                    "t" => return Ok(Node::Var(Var::T)),
                    "u" => return Ok(Node::Var(Var::U)),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "tanh" => Func::Tanh,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        self.pos = start;
                        return Err(self.err(&format!("unknown identifier `{ident}`")));
                    }
                };
                if !self.eat(b'(') {
                    return Err(self.err("expected `(` after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).unwrap_or_default();
        let value: f64 = text.parse().map_err(|_| self.err(&format!("malformed number `{text}`")))?;
        self.pos = i;
        Ok(Node::Num(value))
    }
}
