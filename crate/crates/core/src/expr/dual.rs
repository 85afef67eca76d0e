//! Second-order forward-mode differentiation.
//!
//! A [`DualValue`] carries a value together with its gradient and Hessian
//! with respect to `(c, x, t)`. The Hessian is stored as its upper triangle,
//! so `second(a, b) == second(b, a)` holds bit for bit.

use serde::Serialize;

use super::{is_small_integer, Bindings, Expr, ExprError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualValue {
    pub value: f64,
    first: [f64; 3],
    // (c,c) (c,x) (c,t) (x,x) (x,t) (t,t)
    second: [f64; 6],
}

fn tri(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

impl DualValue {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            first: [0.0; 3],
            second: [0.0; 6],
        }
    }

    pub fn variable(var: Var, value: f64) -> Self {
        let mut d = Self::constant(value);
        d.first[var.index()] = 1.0;
        d
    }

    pub fn first(&self, var: Var) -> f64 {
        self.first[var.index()]
    }

    pub fn second(&self, a: Var, b: Var) -> f64 {
        self.second[tri(a.index(), b.index())]
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.first.iter().all(|v| v.is_finite()) && self.second.iter().all(|v| v.is_finite())
    }

    /// Applies a scalar function `g` with `g(a) = g0`, `g'(a) = g1`,
    /// `g''(a) = g2`.
    fn chain(&self, g0: f64, g1: f64, g2: f64) -> Self {
        let mut out = Self::constant(g0);
        for k in 0..3 {
            out.first[k] = g1 * self.first[k];
        }
        for (n, (i, j)) in PAIRS.iter().enumerate() {
            out.second[n] = g2 * self.first[*i] * self.first[*j] + g1 * self.second[n];
        }
        out
    }

    fn add(&self, o: &Self) -> Self {
        let mut out = Self::constant(self.value + o.value);
        for k in 0..3 {
            out.first[k] = self.first[k] + o.first[k];
        }
        for n in 0..6 {
            out.second[n] = self.second[n] + o.second[n];
        }
        out
    }

    fn neg(&self) -> Self {
        self.chain(-self.value, -1.0, 0.0)
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    fn mul(&self, o: &Self) -> Self {
        let mut out = Self::constant(self.value * o.value);
        for k in 0..3 {
            out.first[k] = self.value * o.first[k] + o.value * self.first[k];
        }
        for (n, (i, j)) in PAIRS.iter().enumerate() {
            out.second[n] = self.value * o.second[n]
                + o.value * self.second[n]
                + (self.first[*i] * o.first[*j] + self.first[*j] * o.first[*i]);
        }
        out
    }

    fn recip(&self) -> Result<Self, ExprError> {
        let b = self.value;
        if b == 0.0 {
            return Err(ExprError::Domain("division by zero".into()));
        }
        Ok(self.chain(1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b)))
    }

    fn ln(&self) -> Result<Self, ExprError> {
        let a = self.value;
        if a <= 0.0 {
            return Err(ExprError::Domain(format!("ln of non-positive argument {a}")));
        }
        Ok(self.chain(a.ln(), 1.0 / a, -1.0 / (a * a)))
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    fn powi(&self, n: i32) -> Result<Self, ExprError> {
        let a = self.value;
        match n {
            0 => Ok(Self::constant(1.0)),
            1 => Ok(*self),
            _ => {
                if a == 0.0 && n < 0 {
                    return Err(ExprError::Domain("zero raised to a negative power".into()));
                }
                let nf = n as f64;
                let g2 = if n == 2 { 2.0 } else { nf * (nf - 1.0) * a.powi(n - 2) };
                Ok(self.chain(a.powi(n), nf * a.powi(n - 1), g2))
            }
        }
    }

    fn powf(&self, p: f64) -> Result<Self, ExprError> {
        let a = self.value;
        if a <= 0.0 {
            return Err(ExprError::Domain(format!(
                "base {a} of non-integer power must be positive"
            )));
        }
        Ok(self.chain(a.powf(p), p * a.powf(p - 1.0), p * (p - 1.0) * a.powf(p - 2.0)))
    }

    fn drop_second(mut self, order: Order) -> Self {
        if order == Order::First {
            self.second = [0.0; 6];
        }
        self
    }
}

impl Expr {
    /// Value with first (and optionally second) partial derivatives with
    /// respect to `c`, `x` and `t`.
    ///
    /// Unbound variables are an error even when their partials would be
    /// irrelevant, so callers must bind every variable the tree uses.
    pub fn eval_with_derivs(&self, b: &Bindings, order: Order) -> Result<DualValue, ExprError> {
        let d = self.dual(b)?.drop_second(order);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    fn dual(&self, b: &Bindings) -> Result<DualValue, ExprError> {
        Ok(match self {
            Expr::Num(v) => DualValue::constant(*v),
            Expr::Var(v) => DualValue::variable(*v, b.get(*v).ok_or(ExprError::Unbound(*v))?),
            Expr::Neg(a) => a.dual(b)?.neg(),
            Expr::Add(l, r) => l.dual(b)?.add(&r.dual(b)?),
            Expr::Sub(l, r) => l.dual(b)?.sub(&r.dual(b)?),
            Expr::Mul(l, r) => l.dual(b)?.mul(&r.dual(b)?),
            Expr::Div(l, r) => l.dual(b)?.mul(&r.dual(b)?.recip()?),
            Expr::Pow(base, exponent) => {
                let a = base.dual(b)?;
                match exponent.as_ref() {
                    Expr::Num(p) if is_small_integer(*p) => a.powi(*p as i32)?,
                    Expr::Num(p) => a.powf(*p)?,
                    e => {
                        // a^e = exp(e ln a)
                        let p = e.dual(b)?;
                        a.ln()?.mul(&p).exp()
                    }
                }
            }
            Expr::Ln(a) => a.dual(b)?.ln()?,
            Expr::Exp(a) => a.dual(b)?.exp(),
        })
    }
}
