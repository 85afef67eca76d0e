//! Current-value objects of the maximum principle.
//!
//! ```text
//! L(x, c, t)    = e^{-θt} u(c, x)
//! G(x, c, t)    = f(x, t) - c
//! H(x, c, t, λ) = L + λ G
//! ```
//!
//! Along an interior optimum the multiplier satisfies
//! `e^{-θt} u_c = λ` and `λ' = -e^{-θt} u_x - λ f_x`. Differentiating the
//! first identity along the path and substituting the second gives the
//! Euler equation used by the solver:
//!
//! ```text
//! u_cc ċ = (θ - f_x) u_c - u_x - u_cx ẋ,     ẋ = f(x, t) - c
//! ```
//!
//! For separable `u(c) + v(x)` this reduces to
//! `ċ/c = ((f_x - θ) u'(c) + v'(x)) / (-c u''(c))`. `f_t` does not enter.

use serde::Serialize;

use crate::expr::{Order, Var};
use crate::numeric::grid_derivative;
use crate::problem::{AdmissiblePath, ProblemSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianEval {
    pub l: f64,
    pub g: f64,
    /// Computed as `l + lambda * g`.
    pub h: f64,
    pub dh_dc: f64,
    pub dh_dx: f64,
}

pub fn eval_lgh(spec: &ProblemSpec, x: f64, c: f64, t: f64, lambda: f64) -> Result<HamiltonianEval> {
    let u = spec.u_at(c, x, Order::First)?;
    let f = spec.f_at(x, t, Order::First)?;
    let disc = spec.discount(t);
    let l = disc * u.value;
    let g = f.value - c;
    Ok(HamiltonianEval {
        l,
        g,
        h: l + lambda * g,
        dh_dc: disc * u.first(Var::C) - lambda,
        dh_dx: disc * u.first(Var::X) + lambda * f.first(Var::X),
    })
}

/// Costate samples on the grid of an [`AdmissiblePath`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierPath {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl MultiplierPath {
    pub fn new(t: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if t.len() != lambda.len() {
            return Err(Error::InvalidArgument("t and lambda lengths differ".into()));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("multiplier contains non-finite values".into()));
        }
        Ok(Self { t, lambda })
    }
}

/// `λ_k = e^{-θ t_k} u_c(c_k, x_k)`.
pub fn multiplier_from_path(spec: &ProblemSpec, path: &AdmissiblePath) -> Result<MultiplierPath> {
    let mut lambda = Vec::with_capacity(path.len());
    for k in 0..path.len() {
        let t = path.t[k];
        let u_c = spec.u_at(path.c[k], path.x[k], Order::First)?.first(Var::C);
        if !(u_c > 0.0) {
            return Err(Error::NonPositiveMarginalUtility { u_c, t });
        }
        lambda.push(spec.discount(t) * u_c);
    }
    MultiplierPath::new(path.t.clone(), lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocResiduals {
    /// `e^{-θt} u_c - λ` at every node.
    #[serde(skip)]
    pub r_c: Vec<f64>,
    /// `λ'_fd + e^{-θt} u_x + λ f_x` at interior nodes (`len - 2` entries,
    /// aligned with nodes `1..len-1`).
    #[serde(skip)]
    pub r_costate: Vec<f64>,
    pub sup_r_c: f64,
    pub sup_r_costate: f64,
    /// Node times of the two suprema.
    pub argmax_r_c: f64,
    pub argmax_r_costate: f64,
    /// Scale of the centered-difference truncation error,
    /// `max Δt² · |λ''|` over interior nodes.
    pub fd_floor: f64,
}

fn sup_with_arg(values: &[f64], times: &[f64]) -> (f64, f64) {
    values
        .iter()
        .zip(times)
        .fold((0.0, times.first().copied().unwrap_or(0.0)), |(m, at), (v, t)| {
            let a = if v.is_nan() { f64::INFINITY } else { v.abs() };
            if a > m {
                (a, *t)
            } else {
                (m, at)
            }
        })
}

pub fn foc_residuals(spec: &ProblemSpec, path: &AdmissiblePath, m: &MultiplierPath) -> Result<FocResiduals> {
    if m.t != path.t {
        return Err(Error::GridMismatch);
    }
    let n = path.len();
    let lambda_dot = grid_derivative(&path.t, &m.lambda);
    let mut r_c = Vec::with_capacity(n);
    let mut r_costate = Vec::with_capacity(n.saturating_sub(2));
    let mut fd_floor: f64 = 0.0;
    for k in 0..n {
        let (t, x, c, lam) = (path.t[k], path.x[k], path.c[k], m.lambda[k]);
        let u = spec.u_at(c, x, Order::First)?;
        let f = spec.f_at(x, t, Order::First)?;
        let disc = spec.discount(t);
        r_c.push(disc * u.first(Var::C) - lam);
        if k > 0 && k + 1 < n {
            r_costate.push(lambda_dot[k] + disc * u.first(Var::X) + lam * f.first(Var::X));
            let h1 = t - path.t[k - 1];
            let h2 = path.t[k + 1] - t;
            let second = 2.0 * ((m.lambda[k + 1] - lam) / h2 - (lam - m.lambda[k - 1]) / h1) / (h1 + h2);
            fd_floor = fd_floor.max(h1.max(h2).powi(2) * second.abs());
        }
    }
    let (sup_r_c, argmax_r_c) = sup_with_arg(&r_c, &path.t);
    let (sup_r_costate, argmax_r_costate) = sup_with_arg(&r_costate, &path.t[1..n - 1]);
    Ok(FocResiduals {
        r_c,
        r_costate,
        sup_r_c,
        sup_r_costate,
        argmax_r_c,
        argmax_r_costate,
        fd_floor,
    })
}

/// Right-hand side `(ẋ, ċ)` of the canonical system in `(x, c)`.
pub fn euler_rhs(spec: &ProblemSpec, x: f64, c: f64, t: f64) -> Result<(f64, f64)> {
    let u = spec.u_at(c, x, Order::Second)?;
    let f = spec.f_at(x, t, Order::First)?;
    let xdot = f.value - c;
    let u_c = u.first(Var::C);
    let u_cc = u.second(Var::C, Var::C);
    // relative curvature c u_cc / u_c is scale free
    if u_cc == 0.0 || u_cc.abs() * c.abs() < 1e-12 * u_c.abs() {
        return Err(Error::SingularEuler { u_cc, c, x });
    }
    let num = (spec.theta - f.first(Var::X)) * u_c - u.first(Var::X) - u.second(Var::C, Var::X) * xdot;
    Ok((xdot, num / u_cc))
}

/// `ċ - ċ_model` at every node, with `ċ` from grid differences of the path
/// and `ċ_model` from [`euler_rhs`]. NaN where the Euler equation is
/// singular or undefined.
pub fn euler_residuals(spec: &ProblemSpec, path: &AdmissiblePath) -> Vec<f64> {
    let cdot = grid_derivative(&path.t, &path.c);
    (0..path.len())
        .map(|k| match euler_rhs(spec, path.x[k], path.c[k], path.t[k]) {
            Ok((_, model)) => cdot[k] - model,
            Err(_) => f64::NAN,
        })
        .collect()
}
