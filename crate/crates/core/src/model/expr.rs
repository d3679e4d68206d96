//! Arithmetic mini-language for coefficient fields.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//! var    := 'u' | 'v'
//! func   := sin | cos | exp | sqrt | abs      (one argument)
//!         | min | max                         (two arguments)
//! ```
//!
//! Unary coefficients may only reference `u`; binary coefficients may
//! reference `u` and `v`. The [`fmt::Display`] output is a fully
//! parenthesised canonical form that re-parses to an identical tree.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arity {
    Unary,
    Binary,
}

impl Arity {
    pub fn count(self) -> usize {
        match self {
            Arity::Unary => 1,
            Arity::Binary => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    /// A variable that the declared arity does not provide.
    Arity(String),
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", self.describe())]
pub struct ParseError {
    /// Byte offset into the source text.
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn describe(&self) -> String {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => format!("syntax error at {}: {msg}", self.position),
            ParseErrorKind::UnknownIdentifier(name) => {
                format!("unknown identifier `{name}` at {}", self.position)
            }
            ParseErrorKind::Arity(name) => format!(
                "variable `{name}` at {} is not available for this coefficient",
                self.position
            ),
            ParseErrorKind::Empty => "empty expression".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    U,
    V,
}

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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arg_count(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self {
            Expr::Num(x) => *x,
            Expr::Var(Var::U) => u,
            Expr::Var(Var::V) => v,
            Expr::Neg(e) => -e.eval(u, v),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(u, v), b.eval(u, v));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(u, v);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Min => x.min(args[1].eval(u, v)),
                    Func::Max => x.max(args[1].eval(u, v)),
                }
            }
        }
    }

    /// Literal constant value, if the tree is a bare number.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest string that round-trips.
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(Var::U) => f.write_str("u"),
            Expr::Var(Var::V) => f.write_str("v"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A parsed coefficient field together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExpr {
    source: String,
    ast: Expr,
    arity: Arity,
}

impl CoefficientExpr {
    pub fn parse(source: &str, arity: Arity) -> Result<Self, ParseError> {
        let ast = Parser::new(source, arity).parse()?;
        Ok(CoefficientExpr {
            source: source.to_string(),
            ast,
            arity,
        })
    }

    pub fn constant(value: f64, arity: Arity) -> Self {
        let ast = Expr::Num(value);
        CoefficientExpr {
            source: format!("{ast}"),
            ast,
            arity,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    /// Canonical, fully parenthesised rendering.
    pub fn canonical(&self) -> String {
        self.ast.to_string()
    }

    #[inline]
    pub fn eval1(&self, u: f64) -> f64 {
        self.ast.eval(u, 0.0)
    }

    #[inline]
    pub fn eval2(&self, u: f64, v: f64) -> f64 {
        self.ast.eval(u, v)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.ast.as_constant()
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

/// Convenience wrapper around [`CoefficientExpr::parse`].
pub fn parse_coefficient(source: &str, arity: Arity) -> Result<CoefficientExpr, ParseError> {
    CoefficientExpr::parse(source, arity)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser<'a> {
    src: &'a str,
    arity: Arity,
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, arity: Arity) -> Self {
        Parser {
            src,
            arity,
            tokens: Vec::new(),
            pos: 0,
        }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        if self.src.trim().is_empty() {
            return Err(ParseError {
                position: 0,
                kind: ParseErrorKind::Empty,
            });
        }
        self.tokens = self.lex()?;
        let e = self.expr()?;
        match self.peek() {
            (_, Token::End) => Ok(e),
            (at, tok) => Err(syntax(*at, format!("unexpected {}", describe(tok)))),
        }
    }

    fn lex(&self) -> Result<Vec<(usize, Token)>, ParseError> {
        let bytes = self.src.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let start = i;
            let tok = match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    i += 1;
                    continue;
                }
                b'+' => Token::Plus,
                b'-' => Token::Minus,
                b'*' => Token::Star,
                b'/' => Token::Slash,
                b'(' => Token::LParen,
                b')' => Token::RParen,
                b',' => Token::Comma,
                b'0'..=b'9' | b'.' => {
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
                    let text = &self.src[start..i];
                    let value: f64 = text
                        .parse()
                        .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
                    out.push((start, Token::Num(value)));
                    continue;
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    out.push((start, Token::Ident(self.src[start..i].to_string())));
                    continue;
                }
                _ => {
                    let ch = self.src[start..].chars().next().unwrap_or('?');
                    return Err(syntax(start, format!("unexpected character `{ch}`")));
                }
            };
            out.push((start, tok));
            i += 1;
        }
        out.push((self.src.len(), Token::End));
        Ok(out)
    }

    fn peek(&self) -> &(usize, Token) {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> (usize, Token) {
        let t = self.tokens[self.pos].clone();
        if !matches!(t.1, Token::End) {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        let (at, tok) = self.bump();
        if tok == want {
            Ok(())
        } else {
            Err(syntax(
                at,
                format!("expected {}, found {}", describe(&want), describe(&tok)),
            ))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().1 {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().1 {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek().1, Token::Minus) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (at, tok) = self.bump();
        match tok {
            Token::Num(x) => Ok(Expr::Num(x)),
            Token::LParen => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "u" => Ok(Expr::Var(Var::U)),
                "v" if self.arity == Arity::Binary => Ok(Expr::Var(Var::V)),
                "v" => Err(ParseError {
                    position: at,
                    kind: ParseErrorKind::Arity(name),
                }),
                _ => {
                    let func = Func::from_name(&name).ok_or(ParseError {
                        position: at,
                        kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                    })?;
                    self.expect(Token::LParen)?;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek().1, Token::Comma) {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    if args.len() != func.arg_count() {
                        return Err(syntax(
                            at,
                            format!(
                                "`{}` takes {} argument(s), got {}",
                                func.name(),
                                func.arg_count(),
                                args.len()
                            ),
                        ));
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            other => Err(syntax(at, format!("unexpected {}", describe(&other)))),
        }
    }
}

fn syntax(position: usize, msg: String) -> ParseError {
    ParseError {
        position,
        kind: ParseErrorKind::Syntax(msg),
    }
}

fn describe(tok: &Token) -> String {
    match tok {
        Token::Num(x) => format!("number {x}"),
        Token::Ident(s) => format!("identifier `{s}`"),
        Token::Plus => "`+`".into(),
        Token::Minus => "`-`".into(),
        Token::Star => "`*`".into(),
        Token::Slash => "`/`".into(),
        Token::LParen => "`(`".into(),
        Token::RParen => "`)`".into(),
        Token::Comma => "`,`".into(),
        Token::End => "end of input".into(),
    }
}
