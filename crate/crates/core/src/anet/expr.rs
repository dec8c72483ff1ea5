//! The packet expression language.
//!
//! Text form: `#1 / #2`, `digits(#1 * 3, 40)`, with `+ - * /`, parentheses,
//! numeric literals and 1-based argument references. Binary form is prefix
//! (Polish) notation over one-byte opcodes.

use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub const MAX_DEPTH: usize = 64;

pub const OP_ADD: u8 = 0x01;
pub const OP_SUB: u8 = 0x02;
pub const OP_MUL: u8 = 0x03;
pub const OP_DIV: u8 = 0x04;
pub const OP_DIGITS: u8 = 0x05;
pub const OP_ARG: u8 = 0x10;
pub const OP_LIT: u8 = 0x11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("expression nested deeper than {MAX_DEPTH}")]
    TooDeep,
    #[error("truncated expression code")]
    Truncated,
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("{0} trailing bytes after expression")]
    TrailingBytes(usize),
    #[error("literal is not finite")]
    NonFinite,
    #[error("argument #{0} is not supplied")]
    MissingArg(usize),
    #[error("division by zero")]
    DivisionByZero,
    #[error("digit count must be at least 1")]
    ZeroDigits,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    /// Zero-based argument index.
    Arg(u8),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Truncate to `n` significant decimal digits.
    Digits(Box<Expr>, u16),
}

impl Expr {
    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    /// Number of operator nodes; this is what a node is charged to run it.
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Lit(_) | Expr::Arg(_) => 0,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.op_count() + b.op_count()
            }
            Expr::Digits(e, _) => 1 + e.op_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Lit(_) | Expr::Arg(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Expr::Digits(e, _) => 1 + e.depth(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Expr::Lit(_) => 9,
            Expr::Arg(_) => 2,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.encoded_len() + b.encoded_len()
            }
            Expr::Digits(e, _) => 3 + e.encoded_len(),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Expr::Lit(v) => {
                out.push(OP_LIT);
                out.extend_from_slice(&v.to_be_bytes());
            }
            Expr::Arg(i) => out.extend_from_slice(&[OP_ARG, *i]),
            Expr::Add(a, b) => binary(out, OP_ADD, a, b),
            Expr::Sub(a, b) => binary(out, OP_SUB, a, b),
            Expr::Mul(a, b) => binary(out, OP_MUL, a, b),
            Expr::Div(a, b) => binary(out, OP_DIV, a, b),
            Expr::Digits(e, n) => {
                out.push(OP_DIGITS);
                out.extend_from_slice(&n.to_be_bytes());
                e.encode_into(out);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    /// Decode exactly one expression occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Expr, ExprError> {
        let mut pos = 0;
        let e = decode_at(bytes, &mut pos, 1)?;
        if pos != bytes.len() {
            return Err(ExprError::TrailingBytes(bytes.len() - pos));
        }
        Ok(e)
    }

    /// Exact value given the packet arguments.
    pub fn eval(&self, args: &[f64]) -> Result<BigRational, ExprError> {
        match self {
            Expr::Lit(v) => exact(*v),
            Expr::Arg(i) => {
                let v = args
                    .get(*i as usize)
                    .ok_or(ExprError::MissingArg(*i as usize + 1))?;
                exact(*v)
            }
            Expr::Add(a, b) => Ok(a.eval(args)? + b.eval(args)?),
            Expr::Sub(a, b) => Ok(a.eval(args)? - b.eval(args)?),
            Expr::Mul(a, b) => Ok(a.eval(args)? * b.eval(args)?),
            Expr::Div(a, b) => {
                let d = b.eval(args)?;
                if d.is_zero() {
                    return Err(ExprError::DivisionByZero);
                }
                Ok(a.eval(args)? / d)
            }
            Expr::Digits(e, n) => {
                if *n == 0 {
                    return Err(ExprError::ZeroDigits);
                }
                Ok(truncate_significant(&e.eval(args)?, *n as usize))
            }
        }
    }

    /// Highest argument index referenced, if any.
    pub fn max_arg(&self) -> Option<u8> {
        match self {
            Expr::Lit(_) => None,
            Expr::Arg(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_arg().max(b.max_arg())
            }
            Expr::Digits(e, _) => e.max_arg(),
        }
    }
}

fn binary(out: &mut Vec<u8>, op: u8, a: &Expr, b: &Expr) {
    out.push(op);
    a.encode_into(out);
    b.encode_into(out);
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], ExprError> {
    let end = pos.checked_add(n).ok_or(ExprError::Truncated)?;
    let s = bytes.get(*pos..end).ok_or(ExprError::Truncated)?;
    *pos = end;
    Ok(s)
}

fn decode_at(bytes: &[u8], pos: &mut usize, depth: usize) -> Result<Expr, ExprError> {
    if depth > MAX_DEPTH {
        return Err(ExprError::TooDeep);
    }
    let op = take(bytes, pos, 1)?[0];
    let sub = |pos: &mut usize| decode_at(bytes, pos, depth + 1).map(Box::new);
    Ok(match op {
        OP_LIT => {
            let raw: [u8; 8] = take(bytes, pos, 8)?.try_into().expect("8 bytes");
            let v = f64::from_be_bytes(raw);
            if !v.is_finite() {
                return Err(ExprError::NonFinite);
            }
            Expr::Lit(v)
        }
        OP_ARG => Expr::Arg(take(bytes, pos, 1)?[0]),
        OP_ADD => Expr::Add(sub(pos)?, sub(pos)?),
        OP_SUB => Expr::Sub(sub(pos)?, sub(pos)?),
        OP_MUL => Expr::Mul(sub(pos)?, sub(pos)?),
        OP_DIV => Expr::Div(sub(pos)?, sub(pos)?),
        OP_DIGITS => {
            let raw = take(bytes, pos, 2)?;
            let n = u16::from_be_bytes([raw[0], raw[1]]);
            Expr::Digits(sub(pos)?, n)
        }
        other => return Err(ExprError::UnknownOpcode(other)),
    })
}

fn exact(v: f64) -> Result<BigRational, ExprError> {
    BigRational::from_float(v).ok_or(ExprError::NonFinite)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Arg(i) => write!(f, "#{}", *i as u16 + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Digits(e, n) => write!(f, "digits({e}, {n})"),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser {
            src: s.as_bytes(),
            pos: 0,
        };
        let e = p.expr(1)?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ExprError> {
        let mut lhs = self.term(depth)?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term(depth)?;
            lhs = if c == b'+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
            check_depth(&lhs)?;
        }
        Ok(lhs)
    }

    fn term(&mut self, depth: usize) -> Result<Expr, ExprError> {
        let mut lhs = self.atom(depth)?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.atom(depth)?;
            lhs = if c == b'*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
            check_depth(&lhs)?;
        }
        Ok(lhs)
    }

    fn atom(&mut self, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr(depth + 1)?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'#') => {
                self.pos += 1;
                let n = self.integer()?;
                match n.checked_sub(1).and_then(|i| u8::try_from(i).ok()) {
                    Some(i) => Ok(Expr::Arg(i)),
                    None => Err(self.error("argument references run from #1 to #256")),
                }
            }
            Some(b'-') => {
                self.pos += 1;
                match self.peek() {
                    Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Lit(-self.number()?)),
                    _ => {
                        let e = self.atom(depth + 1)?;
                        Ok(Expr::Sub(Box::new(Expr::Lit(0.0)), Box::new(e)))
                    }
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Lit(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    self.pos += 1;
                }
                if &self.src[start..self.pos] != b"digits" {
                    self.pos = start;
                    return Err(self.error("unknown function"));
                }
                self.expect(b'(')?;
                let e = self.expr(depth + 1)?;
                self.expect(b',')?;
                self.skip_ws();
                let n = self.integer()?;
                let n = u16::try_from(n).map_err(|_| self.error("digit count exceeds 65535"))?;
                self.expect(b')')?;
                Ok(Expr::Digits(Box::new(e), n))
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn integer(&mut self) -> Result<u64, ExprError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error("expected an integer"))
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        let v: f64 = std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error("malformed number"))?;
        if !v.is_finite() {
            return Err(ExprError::NonFinite);
        }
        Ok(v)
    }
}

fn check_depth(e: &Expr) -> Result<(), ExprError> {
    // Left-leaning chains like `1+1+1+...` grow depth without recursion.
    if e.depth() > MAX_DEPTH {
        Err(ExprError::TooDeep)
    } else {
        Ok(())
    }
}

fn pow10(n: usize) -> BigInt {
    num::pow(BigInt::from(10u8), n)
}

/// Number of decimal digits after the point needed so that `digits`
/// significant digits are kept. The integer part is never cut.
fn fraction_digits(abs: &BigRational, digits: usize) -> usize {
    let int = abs.to_integer();
    if !int.is_zero() {
        let k = int.to_string().len();
        return digits.saturating_sub(k);
    }
    if abs.is_zero() {
        return 0;
    }
    // abs < 1: find z, the count of zeros right after the point, so that
    // 10^-(z+1) <= abs < 10^-z.
    let bits = abs.denom().bits() as f64 - abs.numer().bits() as f64;
    let mut z = ((bits - 1.0) * std::f64::consts::LOG10_2).floor().max(0.0) as usize;
    while abs * BigRational::from_integer(pow10(z + 1)) < BigRational::one() {
        z += 1;
    }
    while z > 0 && abs * BigRational::from_integer(pow10(z)) >= BigRational::one() {
        z -= 1;
    }
    z + digits
}

/// Truncate (toward zero) to `digits` significant decimal digits.
pub fn truncate_significant(r: &BigRational, digits: usize) -> BigRational {
    let d = fraction_digits(&r.abs(), digits);
    let scale = pow10(d);
    let scaled = (r * BigRational::from_integer(scale.clone())).trunc();
    scaled / BigRational::from_integer(scale)
}

/// Decimal expansion truncated to `digits` significant digits, trailing
/// zeros and a bare point removed.
pub fn decimal_expansion(r: &BigRational, digits: usize) -> String {
    let abs = r.abs();
    let d = fraction_digits(&abs, digits);
    let scaled = (&abs * BigRational::from_integer(pow10(d))).to_integer();
    let mut s = scaled.to_string();
    if d > 0 {
        if s.len() <= d {
            s = format!("{}{s}", "0".repeat(d + 1 - s.len()));
        }
        s.insert(s.len() - d, '.');
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if r.is_negative() && s.bytes().any(|b| b != b'0' && b != b'.') {
        s.insert(0, '-');
    }
    s
}

/// Lossy view of an exact value, for logging.
pub fn approx(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
