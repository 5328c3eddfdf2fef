//! Recursive-descent parser for path functionals.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | primary ;
//! primary = number | "XT" | call | "(" expr ")" ;
//! call    = "count" "(" box ")"
//!         | "sumjumps" "(" box "," weight ")"
//!         | func "(" expr { "," expr } ")" ;
//! weight  = "x" | "x2" | "tx" | "absx" | "log1pabsx" ;
//! func    = "pow" | "min" | "max" | "clamp" | "exp" | "lnplus" | "indicator" | "abs" ;
//! box     = ident ;
//! ```

use thiserror::Error;

use super::ast::{BinOp, Expr, ExprKind, Func, JumpWeight, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    Arity,
}

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at line {line}, column {column}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub line: usize,
    pub column: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

/// Parse a functional source into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { src, toks, pos: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::Eof => Ok(e),
        t => {
            let msg = format!("unexpected {} after expression", t.describe());
            Err(p.error(ParseErrorKind::Syntax, msg, p.span()))
        }
    }
}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

fn make_error(src: &str, kind: ParseErrorKind, message: String, span: Span) -> ParseError {
    let (line, column) = position(src, span.start);
    ParseError { kind, message, line, column, span }
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = match c {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, Span::new(i, i + 1)));
            i += 1;
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
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
            let v: f64 = text.parse().map_err(|_| {
                make_error(src, ParseErrorKind::Syntax, format!("malformed number `{text}`"), Span::new(start, i))
            })?;
            out.push((Tok::Num(v), Span::new(start, i)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), Span::new(start, i)));
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(make_error(
                src,
                ParseErrorKind::Syntax,
                format!("unexpected character `{ch}`"),
                Span::new(i, i + ch.len_utf8()),
            ));
        }
    }
    out.push((Tok::Eof, Span::new(src.len(), src.len())));
    Ok(out)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, kind: ParseErrorKind, message: String, span: Span) -> ParseError {
        make_error(self.src, kind, message, span)
    }

    fn expect(&mut self, want: Tok) -> Result<Span, ParseError> {
        if *self.peek() == want {
            Ok(self.bump().1)
        } else {
            let msg = format!("expected {}, found {}", want.describe(), self.peek().describe());
            Err(self.error(ParseErrorKind::Syntax, msg, self.span()))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            let span = lhs.span.join(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            let span = lhs.span.join(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            let (_, start) = self.bump();
            let inner = self.unary()?;
            let span = start.join(inner.span);
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, span) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::new(ExprKind::Num(v), span)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) if name == "XT" => Ok(Expr::new(ExprKind::Terminal, span)),
            Tok::Ident(name) => self.call(name, span),
            other => Err(self.error(
                ParseErrorKind::Syntax,
                format!("expected an expression, found {}", other.describe()),
                span,
            )),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match self.bump() {
            (Tok::Ident(s), sp) => Ok((s, sp)),
            (t, sp) => Err(self.error(ParseErrorKind::Syntax, format!("expected {what}, found {}", t.describe()), sp)),
        }
    }

    fn call(&mut self, name: String, name_span: Span) -> Result<Expr, ParseError> {
        if *self.peek() != Tok::LParen {
            return Err(self.error(
                ParseErrorKind::UnknownIdentifier,
                format!("unknown identifier `{name}`"),
                name_span,
            ));
        }
        match name.as_str() {
            "count" => {
                self.bump();
                let (b, _) = self.ident("a box name")?;
                let end = self.expect(Tok::RParen)?;
                Ok(Expr::new(ExprKind::Count(b), name_span.join(end)))
            }
            "sumjumps" => {
                self.bump();
                let (b, _) = self.ident("a box name")?;
                self.expect(Tok::Comma)?;
                let (g, gspan) = self.ident("a jump weight")?;
                let weight = JumpWeight::from_name(&g).ok_or_else(|| {
                    self.error(
                        ParseErrorKind::UnknownIdentifier,
                        format!(
                            "unknown jump weight `{g}` (expected one of {})",
                            JumpWeight::ALL.map(|w| w.name()).join(", ")
                        ),
                        gspan,
                    )
                })?;
                let end = self.expect(Tok::RParen)?;
                Ok(Expr::new(ExprKind::SumJumps(b, weight), name_span.join(end)))
            }
            _ => {
                let func = Func::from_name(&name).ok_or_else(|| {
                    self.error(ParseErrorKind::UnknownIdentifier, format!("unknown function `{name}`"), name_span)
                })?;
                self.bump();
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    args.push(self.expr()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                }
                let end = self.expect(Tok::RParen)?;
                let span = name_span.join(end);
                if args.len() != func.arity() {
                    return Err(self.error(
                        ParseErrorKind::Arity,
                        format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
                        span,
                    ));
                }
                Ok(Expr::new(ExprKind::Call(func, args), span))
            }
        }
    }
}
