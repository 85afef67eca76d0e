//! Scalar expressions over the fixed alphabet `{c, x, t}`.
//!
//! Expressions describe the instantaneous utility `u(c, x)` and the
//! production / budget function `f(x, t)` of a problem. They are parsed from
//! plain text (see [`parse`]), printed back with [`Expr`]'s `Display`
//! implementation, and evaluated either as plain values or with first and
//! second partial derivatives through forward-mode dual arithmetic
//! ([`Expr::eval_with_derivs`]).
//!
//! Model parameters never appear in an `Expr`: they are substituted as
//! numerals while parsing ([`parse_with_params`]).

mod dual;
mod parse;

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use dual::{DualValue, Order};
pub use parse::{parse, parse_with_params};

/// One of the three variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    C,
    X,
    T,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::C, Var::X, Var::T];

    pub fn index(self) -> usize {
        match self {
            Var::C => 0,
            Var::X => 1,
            Var::T => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::C => "c",
            Var::X => "x",
            Var::T => "t",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        match name {
            "c" => Some(Var::C),
            "x" => Some(Var::X),
            "t" => Some(Var::T),
            _ => None,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier \"{name}\" at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unknown function \"{name}\" at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound variable {0}")]
    Unbound(Var),
    #[error("non-finite result")]
    NonFinite,
}

/// Abstract syntax tree of a scalar expression.
///
/// Equality is structural. Trees produced by the parser are constant-folded:
/// no operator node has only numeric children (unless folding would produce
/// a non-finite number).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Ln(Box<Expr>),
    Exp(Box<Expr>),
}

/// Values assigned to the variables of an expression.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings([Option<f64>; 3]);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds all three variables at once.
    pub fn cxt(c: f64, x: f64, t: f64) -> Self {
        Self([Some(c), Some(x), Some(t)])
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.0[var.index()] = Some(value);
        self
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.0[var.index()]
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    /// True when `var` occurs anywhere in the tree.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Ln(a) | Expr::Exp(a) => a.uses(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses(var) || b.uses(var)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        Var::ALL.iter().all(|v| !self.uses(*v))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Ln(a) | Expr::Exp(a) => 1 + a.depth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Splits a top-level sum into its summands (`a - b` contributes `-b`).
    pub fn summands(&self) -> Vec<Expr> {
        let mut out = Vec::new();
        self.collect_summands(false, &mut out);
        out
    }

    fn collect_summands(&self, negate: bool, out: &mut Vec<Expr>) {
        match self {
            Expr::Add(a, b) => {
                a.collect_summands(negate, out);
                b.collect_summands(negate, out);
            }
            Expr::Sub(a, b) => {
                a.collect_summands(negate, out);
                b.collect_summands(!negate, out);
            }
            e if negate => out.push(Expr::Neg(Box::new(e.clone()))),
            e => out.push(e.clone()),
        }
    }

    /// Sum of `terms`, or `0` for an empty list.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut it = terms.into_iter();
        match it.next() {
            None => Expr::Num(0.0),
            Some(first) => it.fold(first, |acc, e| Expr::Add(Box::new(acc), Box::new(e))),
        }
    }

    /// Plain value, with the same domain rules as [`Expr::eval_with_derivs`].
    pub fn eval(&self, b: &Bindings) -> Result<f64, ExprError> {
        let v = self.eval_inner(b)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    fn eval_inner(&self, b: &Bindings) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => b.get(*v).ok_or(ExprError::Unbound(*v))?,
            Expr::Neg(a) => -a.eval_inner(b)?,
            Expr::Add(l, r) => l.eval_inner(b)? + r.eval_inner(b)?,
            Expr::Sub(l, r) => l.eval_inner(b)? - r.eval_inner(b)?,
            Expr::Mul(l, r) => l.eval_inner(b)? * r.eval_inner(b)?,
            Expr::Div(l, r) => {
                let num = l.eval_inner(b)?;
                let den = r.eval_inner(b)?;
                if den == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                num / den
            }
            Expr::Pow(base, exponent) => {
                let a = base.eval_inner(b)?;
                match exponent.as_ref() {
                    Expr::Num(p) if is_small_integer(*p) => {
                        if a == 0.0 && *p < 0.0 {
                            return Err(ExprError::Domain("zero raised to a negative power".into()));
                        }
                        a.powi(*p as i32)
                    }
                    e => {
                        let p = e.eval_inner(b)?;
                        if a <= 0.0 {
                            return Err(ExprError::Domain(format!(
                                "base {a} of non-integer power must be positive"
                            )));
                        }
                        a.powf(p)
                    }
                }
            }
            Expr::Ln(a) => {
                let v = a.eval_inner(b)?;
                if v <= 0.0 {
                    return Err(ExprError::Domain(format!("ln of non-positive argument {v}")));
                }
                v.ln()
            }
            Expr::Exp(a) => a.eval_inner(b)?.exp(),
        })
    }

    /// Fast value-only evaluation for hot loops. Domain violations yield NaN
    /// instead of an error; `ln(0)` is NaN, not `-inf`.
    pub fn value(&self, c: f64, x: f64, t: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::C) => c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::T) => t,
            Expr::Neg(a) => -a.value(c, x, t),
            Expr::Add(l, r) => l.value(c, x, t) + r.value(c, x, t),
            Expr::Sub(l, r) => l.value(c, x, t) - r.value(c, x, t),
            Expr::Mul(l, r) => l.value(c, x, t) * r.value(c, x, t),
            Expr::Div(l, r) => {
                let den = r.value(c, x, t);
                if den == 0.0 {
                    f64::NAN
                } else {
                    l.value(c, x, t) / den
                }
            }
            Expr::Pow(base, exponent) => {
                let a = base.value(c, x, t);
                match exponent.as_ref() {
                    Expr::Num(p) if is_small_integer(*p) => {
                        if a == 0.0 && *p < 0.0 {
                            f64::NAN
                        } else {
                            a.powi(*p as i32)
                        }
                    }
                    e => {
                        if a > 0.0 {
                            a.powf(e.value(c, x, t))
                        } else {
                            f64::NAN
                        }
                    }
                }
            }
            Expr::Ln(a) => {
                let v = a.value(c, x, t);
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NAN
                }
            }
            Expr::Exp(a) => a.value(c, x, t).exp(),
        }
    }

    fn precedence_atom(&self) -> bool {
        match self {
            Expr::Num(v) => !v.is_sign_negative(),
            Expr::Var(_) | Expr::Ln(_) | Expr::Exp(_) => true,
            _ => false,
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.precedence_atom() {
            write!(f, "{self}")
        } else {
            write!(f, "({self})")
        }
    }
}

pub(crate) fn is_small_integer(p: f64) -> bool {
    p.fract() == 0.0 && p.abs() <= i32::MAX as f64
}

/// Canonical form: every compound operand of a binary operator is
/// parenthesized, binary operators are surrounded by single spaces, and
/// numbers use the shortest decimal representation that round-trips.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let binary = |f: &mut fmt::Formatter<'_>, l: &Expr, op: &str, r: &Expr| {
            l.fmt_operand(f)?;
            write!(f, " {op} ")?;
            r.fmt_operand(f)
        };
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "-{}", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_operand(f)
            }
            Expr::Add(l, r) => binary(f, l, "+", r),
            Expr::Sub(l, r) => binary(f, l, "-", r),
            Expr::Mul(l, r) => binary(f, l, "*", r),
            Expr::Div(l, r) => binary(f, l, "/", r),
            Expr::Pow(l, r) => binary(f, l, "^", r),
            Expr::Ln(a) => write!(f, "ln({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
