//! Sampled checks of the standing assumptions.
//!
//! The assumptions are global statements; here they are falsified or
//! corroborated on a compact sample box. Every check scans its samples in a
//! fixed order and stops at the first violation, which becomes the
//! reported witness. A passing check reports the sample with the smallest
//! margin instead.
//!
//! | check                          | statement                                              |
//! |--------------------------------|--------------------------------------------------------|
//! | [`check_basic`]                | `u_c > 0`, `u_x >= 0`, `f` and `f_x` finite            |
//! | [`check_h_concavity`]          | `(x, c) -> H(x, c, t, λ)` concave for `λ >= 0`         |
//! | [`check_f_concavity_and_cone`] | `f(., t)` concave, `λ X_t ⊆ X_t`                        |
//! | [`check_scaling_inequality`]   | `(u(c,x) - u(λc,λx)) / (1-λ) <= θ* u(c,x) + θ*₀`        |

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{Bindings, Expr, Order, Var};
use crate::numeric::{linear_fit, logspace, trapezoid};
use crate::problem::{AdmissiblePath, ProblemSpec};
use crate::{Error, Result};

/// Log-spaced sample box in the positive `(c, x)` orthant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBox {
    pub c: (f64, f64),
    pub x: (f64, f64),
    pub per_axis: usize,
}

impl Default for SampleBox {
    fn default() -> Self {
        Self {
            c: (1e-2, 1e2),
            x: (1e-2, 1e2),
            per_axis: 64,
        }
    }
}

impl SampleBox {
    pub fn square(lo: f64, hi: f64, per_axis: usize) -> Self {
        Self {
            c: (lo, hi),
            x: (lo, hi),
            per_axis,
        }
    }

    pub fn c_values(&self) -> Vec<f64> {
        logspace(self.c.0, self.c.1, self.per_axis)
    }

    pub fn x_values(&self) -> Vec<f64> {
        logspace(self.x.0, self.x.1, self.per_axis)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let draw =
            |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
        (draw(rng, self.c), draw(rng, self.x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: BTreeMap<String, f64>,
    pub margin: f64,
}

impl Witness {
    fn new(point: &[(&str, f64)], margin: f64) -> Self {
        Self {
            point: point.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub pass: bool,
    pub worst: Option<Witness>,
    pub samples_used: usize,
    pub note: Option<String>,
}

/// Running state of a scan: keeps the smallest margin, stops at the first
/// margin below `-tol`.
struct Scan {
    tol: f64,
    used: usize,
    worst: Option<Witness>,
    failed: bool,
    note: Option<String>,
}

impl Scan {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            used: 0,
            worst: None,
            failed: false,
            note: None,
        }
    }

    /// Records a sample; returns `false` once the scan should stop.
    fn push(&mut self, margin: f64, point: &[(&str, f64)]) -> bool {
        self.used += 1;
        let violated = margin.is_nan() || margin < -self.tol;
        if violated {
            self.worst = Some(Witness::new(point, margin));
            self.failed = true;
            return false;
        }
        if self.worst.as_ref().is_none_or(|w| margin < w.margin) {
            self.worst = Some(Witness::new(point, margin));
        }
        true
    }

    fn fail_with(&mut self, note: String, point: &[(&str, f64)], margin: f64) {
        self.used += 1;
        self.failed = true;
        self.worst = Some(Witness::new(point, margin));
        self.note = Some(note);
    }

    fn finish(self, name: &str) -> CheckRecord {
        CheckRecord {
            name: name.to_string(),
            pass: !self.failed,
            worst: self.worst,
            samples_used: self.used,
            note: self.note,
        }
    }
}

/// Monotonicity of `u` and regularity of `f`.
///
/// The reported margin is `u_c`; a negative `u_x` or a non-finite `f`, `f_x`
/// fails the check with a note naming the condition.
pub fn check_basic(spec: &ProblemSpec, samples: &SampleBox, t_samples: &[f64]) -> CheckRecord {
    let mut scan = Scan::new(0.0);
    let cs = samples.c_values();
    let xs = samples.x_values();
    'outer: for &c in &cs {
        for &x in &xs {
            let point = [("c", c), ("x", x)];
            let u = match spec.u_at(c, x, Order::First) {
                Ok(u) => u,
                Err(e) => {
                    scan.fail_with(format!("u not evaluable: {e}"), &point, f64::NAN);
                    break 'outer;
                }
            };
            let (u_c, u_x) = (u.first(Var::C), u.first(Var::X));
            if !(u_c > 0.0) {
                scan.fail_with("u_c must be positive".into(), &point, u_c);
                break 'outer;
            }
            if u_x < 0.0 {
                scan.fail_with("u must be non-decreasing in x".into(), &point, u_x);
                break 'outer;
            }
            if !scan.push(u_c, &point) {
                break 'outer;
            }
        }
    }
    if !scan.failed {
        'f: for &x in &xs {
            for &t in t_samples {
                let ok = spec.f_at(x, t, Order::First).is_ok();
                scan.used += 1;
                if !ok {
                    scan.fail_with("f or f_x not finite".into(), &[("x", x), ("t", t)], f64::NAN);
                    break 'f;
                }
            }
        }
    }
    scan.finish("monotone utility, differentiable f")
}

fn hamiltonian(spec: &ProblemSpec, c: f64, x: f64, t: f64, lambda: f64) -> Result<f64> {
    let u = spec.u.eval(&Bindings::cxt(c, x, t))?;
    let f = spec.f.eval(&Bindings::cxt(c, x, t))?;
    Ok(spec.discount(t) * u + lambda * (f - c))
}

/// Largest eigenvalue of the symmetric matrix `[[a, b], [b, d]]`.
fn max_eigenvalue(a: f64, b: f64, d: f64) -> f64 {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    mean + (half * half + b * b).sqrt()
}

/// Random point pairs for midpoint-concavity tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSampler {
    pub samples: SampleBox,
    pub pairs: usize,
    pub seed: u64,
    /// Relative tolerance on the midpoint inequality.
    pub tol: f64,
}

impl Default for PairSampler {
    fn default() -> Self {
        Self {
            samples: SampleBox::default(),
            pairs: 512,
            seed: 0x5eed,
            tol: 1e-9,
        }
    }
}

/// Concavity of `H(., ., t, λ)` for each sampled `t` and `λ >= 0`.
///
/// Two tests per pair `(p, q)`: the midpoint inequality
/// `H((p+q)/2) >= (H(p) + H(q))/2` and negative semi-definiteness of the
/// Hessian at `p`.
pub fn check_h_concavity(
    spec: &ProblemSpec,
    t_samples: &[f64],
    lambda_samples: &[f64],
    sampler: &PairSampler,
) -> Result<CheckRecord> {
    if lambda_samples.iter().any(|l| *l < 0.0) {
        return Err(Error::InvalidArgument("multiplier samples must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut scan = Scan::new(sampler.tol);
    'outer: for _ in 0..sampler.pairs {
        let (c1, x1) = sampler.samples.random_point(&mut rng);
        let (c2, x2) = sampler.samples.random_point(&mut rng);
        for &t in t_samples {
            for &lambda in lambda_samples {
                let point = [
                    ("c1", c1),
                    ("x1", x1),
                    ("c2", c2),
                    ("x2", x2),
                    ("t", t),
                    ("lambda", lambda),
                ];
                let hp = hamiltonian(spec, c1, x1, t, lambda)?;
                let hq = hamiltonian(spec, c2, x2, t, lambda)?;
                let hm = hamiltonian(spec, 0.5 * (c1 + c2), 0.5 * (x1 + x2), t, lambda)?;
                let margin = (hm - 0.5 * (hp + hq)) / (1.0 + hp.abs() + hq.abs());
                if !scan.push(margin, &point) {
                    scan.note = Some("midpoint concavity violated".into());
                    break 'outer;
                }

                let u = spec.u_at(c1, x1, Order::Second)?;
                let f = spec.f_at(x1, t, Order::Second)?;
                let disc = spec.discount(t);
                let h_cc = disc * u.second(Var::C, Var::C);
                let h_cx = disc * u.second(Var::C, Var::X);
                let h_xx = disc * u.second(Var::X, Var::X) + lambda * f.second(Var::X, Var::X);
                let top = max_eigenvalue(h_cc, h_cx, h_xx);
                let margin = -top / (1.0 + h_cc.abs() + h_cx.abs() + h_xx.abs());
                if !scan.push(margin, &point) {
                    scan.note = Some("Hessian not negative semi-definite".into());
                    break 'outer;
                }
            }
        }
    }
    Ok(scan.finish("concave Hamiltonian"))
}

/// Midpoint concavity of `f(., t)` plus the cone condition on `X_t`.
///
/// Only `X_t = R+ x R` (state constraint on) and `X_t = R^2` are
/// representable; both are closed under scaling by `λ in (0, 1)`, so the
/// cone part passes without sampling.
pub fn check_f_concavity_and_cone(spec: &ProblemSpec, t_samples: &[f64], sampler: &PairSampler) -> CheckRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed ^ 0xf);
    let mut scan = Scan::new(sampler.tol);
    'outer: for _ in 0..sampler.pairs {
        let (_, x1) = sampler.samples.random_point(&mut rng);
        let (_, x2) = sampler.samples.random_point(&mut rng);
        for &t in t_samples {
            let f1 = spec.f.value(0.0, x1, t);
            let f2 = spec.f.value(0.0, x2, t);
            let fm = spec.f.value(0.0, 0.5 * (x1 + x2), t);
            let margin = (fm - 0.5 * (f1 + f2)) / (1.0 + f1.abs() + f2.abs());
            if !scan.push(margin, &[("x1", x1), ("x2", x2), ("t", t)]) {
                scan.note = Some("f(., t) not concave".into());
                break 'outer;
            }
        }
    }
    if scan.note.is_none() {
        let set = if spec.state_nonneg { "R+ x R" } else { "R^2" };
        scan.note = Some(format!("cone condition holds by construction for X_t = {set}"));
    }
    scan.finish("concave f, cone state set")
}

/// Constants `(θ*, θ*₀, λ̲)` of the scaling inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingCertificate {
    pub theta_star: f64,
    pub theta_star0: f64,
    pub lambda_bar: f64,
}

impl ScalingCertificate {
    pub fn new(theta_star: f64, theta_star0: f64, lambda_bar: f64) -> Result<Self> {
        if !(lambda_bar > 0.0 && lambda_bar < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda_bar = {lambda_bar} is not in (0, 1)"
            )));
        }
        Ok(Self {
            theta_star,
            theta_star0,
            lambda_bar,
        })
    }

    /// `n` points strictly inside `(λ̲, 1)`, evenly spaced.
    pub fn lambda_grid(&self, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| self.lambda_bar + (1.0 - self.lambda_bar) * i as f64 / (n + 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamily {
    Log,
    /// `c^{1-σ} / (1-σ)`.
    Crra(f64),
}

/// Closed-form certificates for the standard utility families.
///
/// * log: `θ* = 0`, `θ*₀ = -ln λ̲ / (1 - λ̲)` (the ratio `-ln λ/(1-λ)` is
///   decreasing on `(0, 1)`).
/// * CRRA: `θ* = (1 - λ̲^{1-σ}) / (1 - λ̲)`, `θ*₀ = 0`.
pub fn builtin_certificate(family: UtilityFamily, lambda_bar: f64) -> Result<ScalingCertificate> {
    if !(lambda_bar > 0.0 && lambda_bar < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_bar = {lambda_bar} is not in (0, 1)"
        )));
    }
    match family {
        UtilityFamily::Log => ScalingCertificate::new(0.0, -lambda_bar.ln() / (1.0 - lambda_bar), lambda_bar),
        UtilityFamily::Crra(sigma) => {
            if !(sigma > 0.0) || sigma == 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "CRRA needs sigma > 0 and sigma != 1, got {sigma}"
                )));
            }
            let theta_star = (1.0 - lambda_bar.powf(1.0 - sigma)) / (1.0 - lambda_bar);
            ScalingCertificate::new(theta_star, 0.0, lambda_bar)
        }
    }
}

fn scaling_scan(
    scan: &mut Scan,
    label: &str,
    u: &Expr,
    cert: &ScalingCertificate,
    lambdas: &[f64],
    points: &[(f64, f64)],
) -> Result<bool> {
    for &(c, x) in points {
        let base = u.eval(&Bindings::cxt(c, x, 0.0))?;
        let rhs = cert.theta_star * base + cert.theta_star0;
        for &l in lambdas {
            let scaled = u.eval(&Bindings::cxt(l * c, l * x, 0.0))?;
            let lhs = (base - scaled) / (1.0 - l);
            if !scan.push(rhs - lhs, &[("c", c), ("x", x), ("lambda", l)]) {
                scan.note = Some(format!("{label} inequality violated"));
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Tests the scaling inequality on `lambda_grid x point grid`.
///
/// For separable `u(c) + v(x)` the `u` and `v` parts are tested separately
/// (over the `c` axis and the `x` axis); otherwise `u` is tested on the full
/// `(c, x)` grid. The margin is `RHS - LHS`, absolute tolerance `tol`.
pub fn check_scaling_inequality(
    spec: &ProblemSpec,
    cert: &ScalingCertificate,
    lambda_grid: &[f64],
    points: &SampleBox,
    tol: f64,
) -> Result<CheckRecord> {
    if lambda_grid.iter().any(|l| !(*l > cert.lambda_bar && *l < 1.0)) {
        return Err(Error::InvalidArgument("lambda grid must lie in (lambda_bar, 1)".into()));
    }
    let mut scan = Scan::new(tol);
    let cs = points.c_values();
    let xs = points.x_values();
    let name = match &spec.separable {
        Some(sep) => {
            let c_pts: Vec<_> = cs.iter().map(|c| (*c, 1.0)).collect();
            let x_pts: Vec<_> = xs.iter().map(|x| (1.0, *x)).collect();
            if scaling_scan(&mut scan, "u", &sep.u, cert, lambda_grid, &c_pts)? {
                scaling_scan(&mut scan, "v", &sep.v, cert, lambda_grid, &x_pts)?;
            }
            "scaling inequality (separable)"
        }
        None => {
            let pts: Vec<_> = cs.iter().flat_map(|c| xs.iter().map(move |x| (*c, *x))).collect();
            scaling_scan(&mut scan, "u", &spec.u, cert, lambda_grid, &pts)?;
            "scaling inequality"
        }
    };
    Ok(scan.finish(name))
}

/// The scaling inequality restricted to the points `(c_k, x_k)` of a path,
/// which is all the transversality argument uses.
pub fn check_scaling_along_path(
    spec: &ProblemSpec,
    cert: &ScalingCertificate,
    lambda_grid: &[f64],
    path: &AdmissiblePath,
    tol: f64,
) -> Result<CheckRecord> {
    let mut scan = Scan::new(tol);
    let pts: Vec<_> = path.c.iter().copied().zip(path.x.iter().copied()).collect();
    scaling_scan(&mut scan, "u", &spec.u, cert, lambda_grid, &pts)?;
    Ok(scan.finish("scaling inequality along path"))
}

/// Implied consumption `f(λ x_k, t_k) - λ ẋ_k` of the path scaled by `λ`.
pub fn scaled_consumption(spec: &ProblemSpec, path: &AdmissiblePath, lambda: f64) -> Vec<f64> {
    let xdot = path.xdot();
    (0..path.len())
        .map(|k| spec.f.value(0.0, lambda * path.x[k], path.t[k]) - lambda * xdot[k])
        .collect()
}

/// Gap `W(λ, t_k) = (v(x, ẋ, t) - v(λx, λẋ, t)) / (1 - λ)` with
/// `v(y, z, t) = e^{-θt} u(f(y, t) - z, y)`, evaluated at node `k`.
pub fn scaling_gap_w(spec: &ProblemSpec, path: &AdmissiblePath, lambda: f64, k: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} is not in (0, 1)")));
    }
    if k >= path.len() {
        return Err(Error::InvalidArgument(format!("node {k} out of range")));
    }
    let xdot = path.xdot()[k];
    let (t, x) = (path.t[k], path.x[k]);
    let c_full = spec.f.eval(&Bindings::cxt(0.0, x, t))? - xdot;
    let c_scaled = spec.f.eval(&Bindings::cxt(0.0, lambda * x, t))? - lambda * xdot;
    if c_scaled < 0.0 {
        return Err(
            crate::expr::ExprError::Domain(format!("scaled consumption {c_scaled} is negative at t = {t}")).into(),
        );
    }
    let v_full = spec.u.eval(&Bindings::cxt(c_full, x, t))?;
    let v_scaled = spec.u.eval(&Bindings::cxt(c_scaled, lambda * x, t))?;
    Ok(spec.discount(t) * (v_full - v_scaled) / (1.0 - lambda))
}

/// Truncated discounted objective plus a geometric bound on the tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    /// Trapezoidal `∫ e^{-θt} u dt` over the path grid.
    pub truncated: f64,
    /// Richardson estimate of the trapezoid error.
    pub quadrature_error: f64,
    /// Fitted exponential growth rate of `|u|` on the last 20% of the grid.
    pub growth_rate: f64,
    /// `e^{-θT} |u(T)| / (θ - g)`, infinite when `g >= θ`.
    pub tail_bound: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub diverges: bool,
}

pub fn tail_integral_estimate(spec: &ProblemSpec, path: &AdmissiblePath) -> Result<TailEstimate> {
    let n = path.len();
    let mut u = Vec::with_capacity(n);
    for k in 0..n {
        u.push(spec.u.eval(&Bindings::cxt(path.c[k], path.x[k], path.t[k]))?);
    }
    let integrand: Vec<f64> = path.t.iter().zip(&u).map(|(t, v)| spec.discount(*t) * v).collect();
    let truncated = trapezoid(&path.t, &integrand);
    let coarse_t: Vec<f64> = path.t.iter().step_by(2).copied().collect();
    let coarse_y: Vec<f64> = integrand.iter().step_by(2).copied().collect();
    let quadrature_error = if coarse_t.len() >= 2 && (n - 1).is_multiple_of(2) {
        (truncated - trapezoid(&coarse_t, &coarse_y)).abs() / 3.0
    } else {
        0.0
    };

    let start = (n as f64 * 0.8).floor() as usize;
    let start = start.min(n - 3);
    let (ts, logs): (Vec<f64>, Vec<f64>) = (start..n)
        .filter(|k| u[*k] != 0.0)
        .map(|k| (path.t[k], u[k].abs().ln()))
        .unzip();
    let growth_rate = linear_fit(&ts, &logs).map_or(0.0, |(s, _)| s);
    let horizon = path.horizon();
    let u_end = u[n - 1];
    let diverges = growth_rate >= spec.theta;
    let tail_bound = if diverges {
        f64::INFINITY
    } else {
        spec.discount(horizon) * u_end.abs() / (spec.theta - growth_rate)
    };
    let signed_tail = if diverges { f64::NAN } else { tail_bound.copysign(u_end) };
    Ok(TailEstimate {
        truncated,
        quadrature_error,
        growth_rate,
        tail_bound,
        estimate: truncated + signed_tail,
        lower: truncated - tail_bound - quadrature_error,
        upper: truncated + tail_bound + quadrature_error,
        diverges,
    })
}

/// Aggregated verdicts.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CheckReport {
    pub records: Vec<CheckRecord>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn first_failure(&self) -> Option<&CheckRecord> {
        self.records.iter().find(|r| !r.pass)
    }
}

/// Sampling configuration for [`assumption_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckConfig {
    pub samples: SampleBox,
    pub t_samples: Vec<f64>,
    pub lambda_samples: Vec<f64>,
    pub pairs: PairSampler,
    pub lambda_points: usize,
    pub scaling_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            samples: SampleBox::default(),
            t_samples: vec![0.0, 10.0, 100.0],
            lambda_samples: vec![0.0, 0.1, 1.0, 10.0],
            pairs: PairSampler::default(),
            lambda_points: 64,
            scaling_tol: 1e-10,
        }
    }
}

/// Runs the basic, concavity and (when a certificate is given) scaling
/// checks. Evaluation failures inside a check fail that check.
pub fn assumption_suite(spec: &ProblemSpec, cert: Option<&ScalingCertificate>, cfg: &CheckConfig) -> CheckReport {
    let errored = |name: &str, e: Error| CheckRecord {
        name: name.to_string(),
        pass: false,
        worst: None,
        samples_used: 0,
        note: Some(e.to_string()),
    };
    let mut records = vec![check_basic(spec, &cfg.samples, &cfg.t_samples)];
    records.push(
        check_h_concavity(spec, &cfg.t_samples, &cfg.lambda_samples, &cfg.pairs)
            .unwrap_or_else(|e| errored("concave Hamiltonian", e)),
    );
    records.push(check_f_concavity_and_cone(spec, &cfg.t_samples, &cfg.pairs));
    if let Some(cert) = cert {
        records.push(
            check_scaling_inequality(
                spec,
                cert,
                &cert.lambda_grid(cfg.lambda_points),
                &cfg.samples,
                cfg.scaling_tol,
            )
            .unwrap_or_else(|e| errored("scaling inequality", e)),
        );
    }
    CheckReport { records }
}
