//! Arithmetic expressions in `t`, `x1..xd` and `pi` for forcing terms.
//!
//! Precedence from tightest: `^` (right associative), unary `-`, `*` and `/`,
//! `+` and `-`. Functions: `sin cos exp log sqrt abs`, one argument each.

use std::fmt;

use fracbvp::Forcing;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    /// Zero-based state component; written `x1`, `x2`, ...
    X(usize),
    Pi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Nonnegative finite literal.
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    Arity { name: String, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error at offset {}: {msg}", self.offset),
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier '{name}' at offset {}", self.offset)
            }
            ParseErrorKind::Arity { name, expected, found } => write!(
                f,
                "'{name}' takes {expected} argument(s), found {found} at offset {}",
                self.offset
            ),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn syntax<T>(offset: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        kind: ParseErrorKind::Syntax(msg.into()),
    })
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
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
            let text = &src[start..i];
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push((Tok::Num(v), start)),
                _ => return syntax(start, format!("invalid number '{text}'")),
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                _ => {
                    let ch = src[i..].chars().next().unwrap();
                    return syntax(i, format!("unexpected character '{ch}'"));
                }
            };
            out.push((tok, i));
            i += 1;
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Op(c) => format!("'{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    return self.call(name, offset);
                }
                variable(&name).ok_or(ParseError {
                    offset,
                    kind: ParseErrorKind::UnknownIdentifier(name),
                })
                .map(Expr::Var)
            }
            _ => syntax(offset, format!("expected a number, variable or '(', found {}", self.describe())),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let Some(func) = Func::from_name(&name) else {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::UnknownIdentifier(name),
            });
        };
        self.bump();
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            args.push(self.expr()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
        }
        self.expect_rparen()?;
        if args.len() != 1 {
            return Err(ParseError {
                offset,
                kind: ParseErrorKind::Arity {
                    name,
                    expected: 1,
                    found: args.len(),
                },
            });
        }
        Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            syntax(self.offset(), format!("expected ')', found {}", self.describe()))
        }
    }
}

fn variable(name: &str) -> Option<Var> {
    match name {
        "t" => Some(Var::T),
        "pi" => Some(Var::Pi),
        "x" => Some(Var::X(0)),
        _ => {
            let idx = name.strip_prefix('x')?;
            if idx.starts_with('0') {
                return None;
            }
            idx.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| Var::X(i - 1))
        }
    }
}

pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return syntax(0, "empty expression");
    }
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return syntax(p.offset(), format!("unexpected {}", p.describe()));
    }
    Ok(e)
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::Pi) => std::f64::consts::PI,
            Expr::Var(Var::X(i)) => x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(t, x),
            Expr::Call(f, e) => f.apply(e.eval(t, x)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }

    /// Largest state index referenced, plus one.
    pub fn state_dim(&self) -> usize {
        match self {
            Expr::Var(Var::X(i)) => i + 1,
            Expr::Num(_) | Expr::Var(_) => 0,
            Expr::Neg(e) | Expr::Call(_, e) => e.state_dim(),
            Expr::Bin(_, a, b) => a.state_dim().max(b.state_dim()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::Pi) => f.write_str("pi"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => {
                f.write_str("-")?;
                child(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(BinOp::Pow, a, b) => {
                child(f, a, a.precedence() <= 4)?;
                f.write_str("^")?;
                child(f, b, b.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                child(f, a, a.precedence() < op.precedence())?;
                write!(f, " {} ", op.symbol())?;
                child(f, b, b.precedence() <= op.precedence())
            }
        }
    }
}

/// Forcing given by one expression per component.
#[derive(Debug, Clone)]
pub struct ExprForcing {
    exprs: Vec<Expr>,
    state_dependent: bool,
}

impl ExprForcing {
    /// Fails when an expression refers to a component beyond the dimension.
    pub fn new(exprs: Vec<Expr>) -> Result<Self, String> {
        let d = exprs.len();
        for (c, e) in exprs.iter().enumerate() {
            if e.state_dim() > d {
                return Err(format!("component {} refers to x{} but the dimension is {d}", c + 1, e.state_dim()));
            }
        }
        let state_dependent = exprs.iter().any(|e| e.state_dim() > 0);
        Ok(Self { exprs, state_dependent })
    }
}

impl Forcing for ExprForcing {
    fn dim(&self) -> usize {
        self.exprs.len()
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(t, x);
        }
    }

    fn depends_on_state(&self) -> bool {
        self.state_dependent
    }
}
