//! Recursive-descent parser.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?          right-associative
//! primary := number | variable | param | func "(" args ")" | "(" expr ")"
//! func    := "ln" | "exp" | "pow"          pow takes two arguments
//! ```
//!
//! Numbers accept an optional fraction and exponent (`1.5e-3`). Subtrees
//! whose operands are all numbers are folded into a single number.

use std::collections::BTreeMap;

use super::{is_small_integer, Expr, ExprError, Var};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier \"{s}\""),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        let start = i;
        let tok = match ch {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
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
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number \"{lit}\"")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let shown = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character '{shown}'")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
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

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(
                self.offset(),
                format!("expected {}, found {}", want.describe(), self.peek().describe()),
            ))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Expr::Add as fn(_, _) -> _,
                Tok::Minus => Expr::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = fold(op(Box::new(lhs), Box::new(rhs)));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => Expr::Mul as fn(_, _) -> _,
                Tok::Slash => Expr::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = fold(op(Box::new(lhs), Box::new(rhs)));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(fold(Expr::Neg(Box::new(inner))));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(fold(Expr::Pow(Box::new(base), Box::new(exponent))));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    return self.call(&name, offset);
                }
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Expr::Var(v));
                }
                if let Some(v) = self.params.get(&name) {
                    return Ok(Expr::Num(*v));
                }
                if matches!(name.as_str(), "ln" | "exp" | "pow") {
                    return Err(syntax(self.offset(), format!("expected '(' after {name}")));
                }
                Err(ExprError::UnknownIdentifier { name, offset })
            }
            other => Err(syntax(
                offset,
                format!("expected an operand, found {}", other.describe()),
            )),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Expr, ExprError> {
        let arity = match name {
            "ln" | "exp" => 1,
            "pow" => 2,
            _ => {
                return Err(ExprError::UnknownFunction {
                    name: name.to_string(),
                    offset,
                })
            }
        };
        self.expect(Tok::LParen)?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        if args.len() != arity {
            return Err(syntax(
                offset,
                format!("{name} takes {arity} argument(s), got {}", args.len()),
            ));
        }
        self.expect(Tok::RParen)?;
        let mut args = args.into_iter().map(Box::new);
        let a = args.next().unwrap();
        Ok(fold(match name {
            "ln" => Expr::Ln(a),
            "exp" => Expr::Exp(a),
            _ => Expr::Pow(a, args.next().unwrap()),
        }))
    }
}

/// Replaces an operator node whose operands are all numbers by its value,
/// unless the value is non-finite or undefined.
fn fold(e: Expr) -> Expr {
    let num = |e: &Expr| match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    };
    let folded = match &e {
        Expr::Neg(a) => num(a).map(|a| -a),
        Expr::Ln(a) => num(a).filter(|a| *a > 0.0).map(f64::ln),
        Expr::Exp(a) => num(a).map(f64::exp),
        Expr::Add(a, b) => num(a).zip(num(b)).map(|(a, b)| a + b),
        Expr::Sub(a, b) => num(a).zip(num(b)).map(|(a, b)| a - b),
        Expr::Mul(a, b) => num(a).zip(num(b)).map(|(a, b)| a * b),
        Expr::Div(a, b) => num(a).zip(num(b)).filter(|(_, b)| *b != 0.0).map(|(a, b)| a / b),
        Expr::Pow(a, b) => num(a).zip(num(b)).and_then(|(a, p)| {
            if is_small_integer(p) {
                (a != 0.0 || p >= 0.0).then(|| a.powi(p as i32))
            } else {
                (a > 0.0).then(|| a.powf(p))
            }
        }),
        _ => None,
    };
    match folded {
        Some(v) if v.is_finite() => Expr::Num(v),
        _ => e,
    }
}

/// Parses `text` with no parameters: any identifier other than `c`, `x`,
/// `t` or a function name is an error.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    parse_with_params(text, &BTreeMap::new())
}

/// Parses `text`, substituting each identifier found in `params` by its
/// numeric value.
pub fn parse_with_params(text: &str, params: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
    if text.trim().is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, params };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.offset(), format!("unexpected {}", p.peek().describe())));
    }
    Ok(e)
}
