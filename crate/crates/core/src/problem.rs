//! Problem instances, the problem-file loader, and admissibility checks.
//!
//! # Problem file
//!
//! A problem file is TOML:
//!
//! ```toml
//! theta = 0.03          # discount rate, > 0 (number or constant expression)
//! u = "ln(c)"           # utility u(c, x)
//! v = "ln(x)"           # optional wealth utility, added to u
//! f = "x^alpha"         # budget / production f(x, t) ...
//! # R = "R"             # ... or a return R(t) and endowment w(t):
//! # w = "w"             #     f = R(t) * x + w(t)
//! f_limit = "x^alpha"   # optional autonomous limit of f, used by shooting
//! x0 = 1.0
//! t0 = 0.0              # optional, default 0
//! state_nonneg = true   # optional, default true: x(t) >= 0
//!
//! [params]
//! alpha = 0.3
//! ```
//!
//! Every identifier listed under `[params]` is replaced by its value while
//! the expressions are parsed; the loaded [`ProblemSpec`] contains no
//! symbols other than `c`, `x` and `t`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Bindings, DualValue, Expr, ExprError, Order, Var};
use crate::numeric::{grid_derivative, grid_derivative_error};
use crate::{Error, Result};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed problem file: {0}")]
    Format(String),
    #[error("missing field \"{0}\"")]
    MissingField(&'static str),
    #[error("discount rate must be positive (theta = {0})")]
    NonPositiveDiscount(f64),
    #[error("unknown parameter \"{0}\"")]
    UnknownParameter(String),
    #[error("parameter name \"{0}\" is reserved")]
    ReservedParameter(String),
    #[error("in {field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error("{field} must not depend on {var}")]
    ForbiddenVariable { field: String, var: Var },
    #[error("f must not depend on t for the growth template")]
    NotAutonomous,
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Decomposition `u(c, x) = u(c) + v(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Separable {
    pub u: Expr,
    pub v: Expr,
}

/// How `f` was specified.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Budget {
    General,
    /// `f(x, t) = R(t) x + w(t)`.
    LinearWealth {
        r: Expr,
        w: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub theta: f64,
    pub u: Expr,
    pub separable: Option<Separable>,
    pub f: Expr,
    pub budget: Budget,
    /// Autonomous limit of `f` as `t -> inf`, required by shooting when `f`
    /// depends on `t`.
    pub f_limit: Option<Expr>,
    pub x0: f64,
    pub t0: f64,
    pub state_nonneg: bool,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Scalar {
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    theta: Option<Scalar>,
    u: Option<String>,
    v: Option<String>,
    f: Option<String>,
    #[serde(rename = "R")]
    r: Option<String>,
    w: Option<String>,
    f_limit: Option<String>,
    x0: Option<Scalar>,
    t0: Option<Scalar>,
    state_nonneg: Option<bool>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

const RESERVED: [&str; 6] = ["c", "x", "t", "ln", "exp", "pow"];

fn parse_field(field: &str, text: &str, params: &BTreeMap<String, f64>) -> Result<Expr, ProblemError> {
    expr::parse_with_params(text, params).map_err(|source| ProblemError::Expr {
        field: field.to_string(),
        source,
    })
}

fn forbid(field: &str, e: &Expr, vars: &[Var]) -> Result<(), ProblemError> {
    match vars.iter().find(|v| e.uses(**v)) {
        Some(var) => Err(ProblemError::ForbiddenVariable {
            field: field.to_string(),
            var: *var,
        }),
        None => Ok(()),
    }
}

fn scalar(field: &'static str, s: &Scalar, params: &BTreeMap<String, f64>) -> Result<f64, ProblemError> {
    let v = match s {
        Scalar::Num(v) => *v,
        Scalar::Text(text) => {
            let e = parse_field(field, text, params)?;
            if !e.is_constant() {
                return Err(ProblemError::Invalid {
                    field,
                    reason: "must be a constant".into(),
                });
            }
            e.eval(&Bindings::new()).map_err(|source| ProblemError::Expr {
                field: field.to_string(),
                source,
            })?
        }
    };
    if !v.is_finite() {
        return Err(ProblemError::Invalid {
            field,
            reason: format!("{v} is not finite"),
        });
    }
    Ok(v)
}

/// Splits `u` into a `c`-only part and an `x`-only part when possible.
fn detect_separable(u: &Expr) -> Option<Separable> {
    let mut cs = Vec::new();
    let mut xs = Vec::new();
    for term in u.summands() {
        match (term.uses(Var::C), term.uses(Var::X)) {
            (true, true) => return None,
            (false, true) => xs.push(term),
            _ => cs.push(term),
        }
    }
    Some(Separable {
        u: Expr::sum(cs),
        v: Expr::sum(xs),
    })
}

impl ProblemSpec {
    fn build(
        theta: f64,
        u: Expr,
        separable: Option<Separable>,
        f: Expr,
        budget: Budget,
        x0: f64,
        state_nonneg: bool,
    ) -> Result<Self, ProblemError> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(ProblemError::NonPositiveDiscount(theta));
        }
        forbid("u", &u, &[Var::T])?;
        forbid("f", &f, &[Var::C])?;
        if !x0.is_finite() || (state_nonneg && x0 < 0.0) {
            return Err(ProblemError::Invalid {
                field: "x0",
                reason: format!("{x0} violates the state constraint"),
            });
        }
        let separable = separable.or_else(|| detect_separable(&u));
        Ok(Self {
            theta,
            u,
            separable,
            f,
            budget,
            f_limit: None,
            x0,
            t0: 0.0,
            state_nonneg,
            params: BTreeMap::new(),
        })
    }

    /// Parses a problem file body, applying `overrides` to its parameters.
    pub fn from_toml_str(text: &str, overrides: &BTreeMap<String, f64>) -> Result<Self, ProblemError> {
        let file: ProblemFile = toml::from_str(text).map_err(|e| ProblemError::Format(e.to_string()))?;
        let mut params = file.params.clone();
        for name in params.keys() {
            if RESERVED.contains(&name.as_str()) {
                return Err(ProblemError::ReservedParameter(name.clone()));
            }
        }
        for (name, value) in overrides {
            match params.get_mut(name) {
                Some(slot) => *slot = *value,
                None => return Err(ProblemError::UnknownParameter(name.clone())),
            }
        }

        let theta = scalar(
            "theta",
            file.theta.as_ref().ok_or(ProblemError::MissingField("theta"))?,
            &params,
        )?;
        let x0 = scalar("x0", file.x0.as_ref().ok_or(ProblemError::MissingField("x0"))?, &params)?;
        let t0 = match &file.t0 {
            Some(s) => scalar("t0", s, &params)?,
            None => 0.0,
        };
        let u_text = file.u.as_deref().ok_or(ProblemError::MissingField("u"))?;
        let mut u = parse_field("u", u_text, &params)?;
        let mut separable = None;
        if let Some(v_text) = &file.v {
            let v = parse_field("v", v_text, &params)?;
            forbid("v", &v, &[Var::C, Var::T])?;
            if !u.uses(Var::X) {
                separable = Some(Separable {
                    u: u.clone(),
                    v: v.clone(),
                });
            }
            u = Expr::Add(Box::new(u), Box::new(v));
        }

        let (f, budget) = match (&file.f, &file.r, &file.w) {
            (Some(f), None, None) => (parse_field("f", f, &params)?, Budget::General),
            (None, Some(r), Some(w)) => {
                let r = parse_field("R", r, &params)?;
                let w = parse_field("w", w, &params)?;
                linear_wealth_parts(r, w)?
            }
            (None, None, None) => return Err(ProblemError::MissingField("f")),
            _ => return Err(ProblemError::Format("give either f, or both R and w".into())),
        };

        let mut spec = Self::build(theta, u, separable, f, budget, x0, file.state_nonneg.unwrap_or(true))?;
        spec.t0 = t0;
        spec.params = params.clone();
        if let Some(text) = &file.f_limit {
            let limit = parse_field("f_limit", text, &params)?;
            forbid("f_limit", &limit, &[Var::C, Var::T])?;
            spec.f_limit = Some(limit);
        }
        Ok(spec)
    }

    /// Reads and parses a problem file.
    pub fn load(path: &Path, overrides: &BTreeMap<String, f64>) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, overrides)
    }

    /// Optimal growth: `u(c)` (possibly plus `v(x)`), autonomous `f(x)`,
    /// `x >= 0`.
    pub fn growth(theta: f64, u_text: &str, f_text: &str, x0: f64) -> Result<Self, ProblemError> {
        let u = parse_field("u", u_text, &BTreeMap::new())?;
        let f = parse_field("f", f_text, &BTreeMap::new())?;
        if f.uses(Var::T) {
            return Err(ProblemError::NotAutonomous);
        }
        Self::build(theta, u, None, f, Budget::General, x0, true)
    }

    /// Consumer saving: `f(x, t) = R(t) x + w(t)`, `x >= 0`.
    pub fn linear_wealth(theta: f64, u_text: &str, r_text: &str, w_text: &str, x0: f64) -> Result<Self, ProblemError> {
        let u = parse_field("u", u_text, &BTreeMap::new())?;
        let r = parse_field("R", r_text, &BTreeMap::new())?;
        let w = parse_field("w", w_text, &BTreeMap::new())?;
        let (f, budget) = linear_wealth_parts(r, w)?;
        Self::build(theta, u, None, f, budget, x0, true)
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_f_limit(mut self, limit: Expr) -> Self {
        self.f_limit = Some(limit);
        self
    }

    pub fn is_autonomous(&self) -> bool {
        !self.f.uses(Var::T)
    }

    /// `f` itself when autonomous, otherwise the supplied limit.
    pub fn autonomous_f(&self) -> Option<&Expr> {
        if self.is_autonomous() {
            Some(&self.f)
        } else {
            self.f_limit.as_ref()
        }
    }

    /// The same problem with `f` replaced by its autonomous limit.
    pub fn limiting_problem(&self) -> Option<ProblemSpec> {
        let f = self.autonomous_f()?.clone();
        Some(ProblemSpec {
            f,
            budget: Budget::General,
            f_limit: None,
            ..self.clone()
        })
    }

    pub fn u_at(&self, c: f64, x: f64, order: Order) -> Result<DualValue> {
        Ok(self.u.eval_with_derivs(&Bindings::cxt(c, x, 0.0), order)?)
    }

    pub fn f_at(&self, x: f64, t: f64, order: Order) -> Result<DualValue> {
        Ok(self.f.eval_with_derivs(&Bindings::cxt(0.0, x, t), order)?)
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.theta * t).exp()
    }
}

fn linear_wealth_parts(r: Expr, w: Expr) -> Result<(Expr, Budget), ProblemError> {
    forbid("R", &r, &[Var::C, Var::X])?;
    forbid("w", &w, &[Var::C, Var::X])?;
    let f = Expr::Add(
        Box::new(Expr::Mul(Box::new(r.clone()), Box::new(Expr::Var(Var::X)))),
        Box::new(w.clone()),
    );
    Ok((f, Budget::LinearWealth { r, w }))
}

/// Sampled pair `(c(.), x(.))` on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissiblePath {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
}

impl AdmissiblePath {
    pub fn new(t: Vec<f64>, x: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if t.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "a path needs at least 3 nodes, got {}",
                t.len()
            )));
        }
        if x.len() != t.len() || c.len() != t.len() {
            return Err(Error::InvalidArgument("t, x and c lengths differ".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("time grid is not strictly increasing".into()));
        }
        if t.iter().chain(&x).chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("path contains non-finite values".into()));
        }
        Ok(Self { t, x, c })
    }

    /// Samples `x(t)` and `c(t)` on `grid`.
    pub fn from_fn(grid: &[f64], mut xc: impl FnMut(f64) -> (f64, f64)) -> Result<Self> {
        let (x, c) = grid.iter().map(|t| xc(*t)).unzip();
        Self::new(grid.to_vec(), x, c)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// State derivative from finite differences.
    pub fn xdot(&self) -> Vec<f64> {
        grid_derivative(&self.t, &self.x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Largest `|c + xdot - f(x, t)|` over the nodes.
    pub max_dyn_residual: f64,
    /// Largest `max(0, |c + xdot - f| - a) / (1 + |f|)`, with `a` the
    /// finite-difference allowance of the node; this is what `tol` bounds.
    pub max_scaled_residual: f64,
    /// Largest allowance `a`: [`FD_ALLOWANCE_FACTOR`] times the estimated
    /// truncation error of `xdot`.
    pub max_fd_allowance: f64,
    pub worst_t: f64,
    pub min_x: f64,
    pub min_c: f64,
    pub tol: f64,
    pub pass: bool,
}

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-6;

pub const FD_ALLOWANCE_FACTOR: f64 = 10.0;

/// Checks the budget identity at every node and the sign constraints.
///
/// `xdot` comes from [`AdmissiblePath::xdot`]; kinks between nodes go
/// unnoticed. On coarse grids the difference quotient itself is off by
/// `O(h^2 x''')`, so each node is allowed [`FD_ALLOWANCE_FACTOR`] times that
/// estimated error before `tol` applies.
pub fn feasibility_check(path: &AdmissiblePath, spec: &ProblemSpec, tol: f64) -> FeasibilityReport {
    let xdot = path.xdot();
    let truncation = grid_derivative_error(&path.t, &path.x);
    let mut max_res: f64 = 0.0;
    let mut max_scaled: f64 = 0.0;
    let mut max_allowance: f64 = 0.0;
    let mut worst_t = path.t[0];
    for k in 0..path.len() {
        let f = spec.f.value(0.0, path.x[k], path.t[k]);
        let res = (path.c[k] + xdot[k] - f).abs();
        let allowance = FD_ALLOWANCE_FACTOR * truncation[k];
        max_allowance = max_allowance.max(allowance);
        let scaled = (res - allowance).max(0.0) / (1.0 + f.abs());
        // NaN from an out-of-domain f counts as infinitely bad
        let scaled = if scaled.is_nan() { f64::INFINITY } else { scaled };
        max_res = max_res.max(if res.is_nan() { f64::INFINITY } else { res });
        if scaled > max_scaled {
            max_scaled = scaled;
            worst_t = path.t[k];
        }
    }
    let min_x = path.x.iter().copied().fold(f64::INFINITY, f64::min);
    let min_c = path.c.iter().copied().fold(f64::INFINITY, f64::min);
    let signs_ok = min_c >= -tol && (!spec.state_nonneg || min_x >= -tol);
    FeasibilityReport {
        max_dyn_residual: max_res,
        max_scaled_residual: max_scaled,
        max_fd_allowance: max_allowance,
        worst_t,
        min_x,
        min_c,
        tol,
        pass: max_scaled <= tol && signs_ok,
    }
}
