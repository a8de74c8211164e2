//! Test-function expressions.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { "*" unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" uint ] ;
//! atom    = number | var | func "(" expr ")" | "(" expr ")" ;
//! var     = ("x" | "z") uint ;          (* 1-based index *)
//! func    = "exp" | "log" | "sin" | "cos" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! `-x1^2` parses as `-(x1^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    SyntaxError { offset: usize, message: String },
    #[error("unknown variable {name:?} at byte {offset}")]
    UnknownVariable { offset: usize, name: String },
}

impl ExprError {
    pub fn code(&self) -> &'static str {
        match self {
            ExprError::SyntaxError { .. } => "SyntaxError",
            ExprError::UnknownVariable { .. } => "UnknownVariable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Zero-based horizontal coordinate.
    X(usize),
    /// Zero-based vertical coordinate.
    Z(usize),
}

impl Var {
    /// Position in the flat `[x.., z..]` coordinate vector.
    #[inline]
    pub fn slot(self, n: usize) -> usize {
        match self {
            Var::X(i) => i,
            Var::Z(k) => n + k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Apply(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn x(i: usize) -> Self {
        Expr::Var(Var::X(i))
    }

    pub fn z(k: usize) -> Self {
        Expr::Var(Var::Z(k))
    }

    pub fn pow(self, e: u32) -> Self {
        Expr::Pow(Box::new(self), e)
    }

    pub fn exp(self) -> Self {
        Expr::Apply(Func::Exp, Box::new(self))
    }

    pub fn log(self) -> Self {
        Expr::Apply(Func::Log, Box::new(self))
    }

    pub fn sin(self) -> Self {
        Expr::Apply(Func::Sin, Box::new(self))
    }

    pub fn cos(self) -> Self {
        Expr::Apply(Func::Cos, Box::new(self))
    }

    /// Evaluates at flat ambient coordinates `[x.., z..]`.
    ///
    /// `n` is the horizontal dimension. Out-of-domain `log` yields NaN here;
    /// the jet evaluator reports it as an error instead.
    pub fn eval(&self, coords: &[f64], n: usize) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => coords[v.slot(n)],
            Expr::Neg(a) => -a.eval(coords, n),
            Expr::Add(a, b) => a.eval(coords, n) + b.eval(coords, n),
            Expr::Sub(a, b) => a.eval(coords, n) - b.eval(coords, n),
            Expr::Mul(a, b) => a.eval(coords, n) * b.eval(coords, n),
            Expr::Pow(a, e) => a.eval(coords, n).powi(*e as i32),
            Expr::Apply(f, a) => {
                let v = a.eval(coords, n);
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => {
                        if v > 0.0 {
                            v.ln()
                        } else {
                            f64::NAN
                        }
                    }
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        }
    }

    /// Largest variable indices used, as `(max x index + 1, max z index + 1)`.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::Var(Var::X(i)) => (i + 1, 0),
            Expr::Var(Var::Z(k)) => (0, k + 1),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Apply(_, a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let (p, q) = (a.arity(), b.arity());
                (p.0.max(q.0), p.1.max(q.1))
            }
        }
    }

    /// Whether the expression is a polynomial (no transcendental nodes).
    pub fn is_polynomial(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) => a.is_polynomial(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.is_polynomial() && b.is_polynomial()
            }
            Expr::Apply(..) => false,
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

// Printed form re-parses to the same tree (full parenthesization).
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Z(k)) => write!(f, "z{}", k + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(a, e) => write!(f, "({a}^{e})"),
            Expr::Apply(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Parses `text` for a group with `n` horizontal and `m` vertical coordinates.
pub fn parse_expr(text: &str, n: usize, m: usize) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        n,
        m,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::SyntaxError {
            offset: self.pos,
            message: message.to_string(),
        }
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

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = lhs + self.term()?;
            } else if self.eat(b'-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while self.eat(b'*') {
            lhs = lhs * self.unary()?;
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            self.skip_ws();
            let start = self.pos;
            let e = self.uint().ok_or_else(|| self.error("expected a non-negative integer exponent"))?;
            let e = u32::try_from(e).map_err(|_| ExprError::SyntaxError {
                offset: start,
                message: "exponent too large".into(),
            })?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn uint(&mut self) -> Option<usize> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let c = self.peek().ok_or_else(|| self.error("unexpected end of input"))?;
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let func = match word {
                "exp" => Some(Func::Exp),
                "log" => Some(Func::Log),
                "sin" => Some(Func::Sin),
                "cos" => Some(Func::Cos),
                _ => None,
            };
            if let Some(func) = func {
                if !self.eat(b'(') {
                    return Err(self.error("expected '(' after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                return Ok(Expr::Apply(func, Box::new(arg)));
            }
            return self.variable(word, start);
        }
        Err(self.error(&format!("unexpected character {:?}", c as char)))
    }

    fn variable(&self, word: &str, start: usize) -> Result<Expr, ExprError> {
        let unknown = || ExprError::UnknownVariable {
            offset: start,
            name: word.to_string(),
        };
        let (kind, digits) = word.split_at(1);
        let idx: usize = digits.parse().map_err(|_| unknown())?;
        if idx == 0 {
            return Err(unknown());
        }
        match kind {
            "x" if idx <= self.n => Ok(Expr::x(idx - 1)),
            "z" if idx <= self.m => Ok(Expr::z(idx - 1)),
            _ => Err(unknown()),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            return Err(self.error("malformed number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).unwrap_or("");
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ExprError::SyntaxError {
                offset: start,
                message: format!("malformed number {text:?}"),
            })
    }
}
