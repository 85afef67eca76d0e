//! Rest points of the canonical system and their linearization.

use serde::Serialize;

use crate::expr::{Order, Var};
use crate::hamiltonian::euler_rhs;
use crate::numeric::logspace;
use crate::problem::ProblemSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    pub x_star: f64,
    pub c_star: f64,
    /// `u_c(c*, x*)`, the multiplier with the discount factor removed.
    pub m_star: f64,
    /// `(|ẋ|, |ċ|)` at the rest point.
    pub residuals: (f64, f64),
}

/// The autonomous problem used for rest points, or an error when `f`
/// depends on time and no limit was supplied.
pub(crate) fn phase_problem(spec: &ProblemSpec) -> Result<ProblemSpec> {
    spec.limiting_problem()
        .ok_or_else(|| Error::InvalidArgument("f depends on t; an autonomous limit (f_limit) is required".into()))
}

/// Stationarity residual along the `ẋ = 0` locus `c = f(x)`.
fn residual(spec: &ProblemSpec, x: f64) -> Option<f64> {
    let f = spec.f_at(x, 0.0, Order::First).ok()?;
    if !(f.value > 0.0) {
        return None;
    }
    let u = spec.u_at(f.value, x, Order::First).ok()?;
    let r = (spec.theta - f.first(Var::X)) * u.first(Var::C) - u.first(Var::X);
    r.is_finite().then_some(r)
}

/// Finds `x*` with `ẋ = 0` and `ċ = 0`.
///
/// Without a bracket, a log-spaced scan of `[1e-8, 1e8]` locates the first
/// sign change. The root is refined by bisection followed by a secant step.
pub fn find_steady_state(spec: &ProblemSpec, bracket: Option<(f64, f64)>) -> Result<SteadyState> {
    let spec = phase_problem(spec)?;
    let (mut lo, mut hi) = match bracket {
        Some((a, b)) => {
            if !(a > 0.0 && b > a) {
                return Err(Error::InvalidArgument(format!("invalid bracket ({a}, {b})")));
            }
            match (residual(&spec, a), residual(&spec, b)) {
                (Some(ra), Some(rb)) if ra * rb < 0.0 => (a, b),
                (Some(ra), _) if ra == 0.0 => (a, a),
                (_, Some(rb)) if rb == 0.0 => (b, b),
                _ => return Err(Error::NoSignChange { lo: a, hi: b }),
            }
        }
        None => scan(&spec)?,
    };
    let r_lo = residual(&spec, lo).unwrap_or(0.0);
    let mut best = lo;
    if lo != hi {
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = residual(&spec, mid).ok_or(Error::NoSignChange { lo, hi })?;
            if r == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (r < 0.0) == (r_lo < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = 0.5 * (lo + hi);
        // one secant step on the final bracket, kept only if it improves
        if let (Some(ra), Some(rb), Some(rm)) = (residual(&spec, lo), residual(&spec, hi), residual(&spec, best)) {
            if rb != ra {
                let xs = lo - ra * (hi - lo) / (rb - ra);
                if let Some(rs) = residual(&spec, xs) {
                    if rs.abs() < rm.abs() {
                        best = xs;
                    }
                }
            }
        }
    }
    let x_star = best;
    let c_star = spec.f_at(x_star, 0.0, Order::First)?.value;
    let m_star = spec.u_at(c_star, x_star, Order::First)?.first(Var::C);
    let (xd, cd) = euler_rhs(&spec, x_star, c_star, 0.0)?;
    Ok(SteadyState {
        x_star,
        c_star,
        m_star,
        residuals: (xd.abs(), cd.abs()),
    })
}

fn scan(spec: &ProblemSpec) -> Result<(f64, f64)> {
    let xs = logspace(1e-8, 1e8, 801);
    let mut prev: Option<(f64, f64)> = None;
    for &x in &xs {
        let Some(r) = residual(spec, x) else { continue };
        if r == 0.0 {
            continue;
        }
        if let Some((xp, rp)) = prev {
            if rp * r < 0.0 {
                return Ok((xp, x));
            }
        }
        prev = Some((x, r));
    }
    Err(Error::NoSignChange {
        lo: xs[0],
        hi: *xs.last().unwrap(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eigenvalues {
    Real { mu1: f64, mu2: f64 },
    Complex { re: f64, im: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    /// `∂(ẋ, ċ)/∂(x, c)`, row-major.
    pub jacobian: [[f64; 2]; 2],
    pub eigenvalues: Eigenvalues,
    pub saddle: bool,
    /// Unit eigenvector of the negative eigenvalue, `x` component `>= 0`.
    pub stable_eigvec: Option<[f64; 2]>,
    pub unstable_eigvec: Option<[f64; 2]>,
    /// Set for singular or defective Jacobians.
    pub flag: Option<String>,
}

impl LinearizationReport {
    pub fn from_jacobian(j: [[f64; 2]; 2]) -> Self {
        let [[a, b], [c, d]] = j;
        let tr = a + d;
        let det = a * d - b * c;
        let disc = 0.25 * tr * tr - det;
        let eigenvalues = if disc >= 0.0 {
            let s = disc.sqrt();
            // stable form of the quadratic roots
            let q = 0.5 * tr + s.copysign(tr);
            let (mu1, mu2) = if q == 0.0 { (s, -s) } else { (q, det / q) };
            let (mu1, mu2) = if mu1 >= mu2 { (mu1, mu2) } else { (mu2, mu1) };
            Eigenvalues::Real { mu1, mu2 }
        } else {
            Eigenvalues::Complex {
                re: 0.5 * tr,
                im: (-disc).sqrt(),
            }
        };
        let scale = a.abs() + b.abs() + c.abs() + d.abs();
        let mut flag = None;
        if det == 0.0 || det.abs() <= 1e-14 * scale * scale {
            flag = Some("singular Jacobian".to_string());
        } else if disc == 0.0 && (b != 0.0 || c != 0.0) {
            flag = Some("defective Jacobian (repeated eigenvalue)".to_string());
        }
        let saddle = det < 0.0 && flag.is_none();
        let (stable_eigvec, unstable_eigvec) = match (saddle, eigenvalues) {
            (true, Eigenvalues::Real { mu1, mu2 }) => (Some(eigvec(j, mu2)), Some(eigvec(j, mu1))),
            _ => (None, None),
        };
        Self {
            jacobian: j,
            eigenvalues,
            saddle,
            stable_eigvec,
            unstable_eigvec,
            flag,
        }
    }

    pub fn determinant(&self) -> f64 {
        let [[a, b], [c, d]] = self.jacobian;
        a * d - b * c
    }

    pub fn trace(&self) -> f64 {
        self.jacobian[0][0] + self.jacobian[1][1]
    }

    /// `(stable, unstable)` eigenvalues of a saddle.
    pub fn saddle_rates(&self) -> Option<(f64, f64)> {
        match (self.saddle, self.eigenvalues) {
            (true, Eigenvalues::Real { mu1, mu2 }) => Some((mu2, mu1)),
            _ => None,
        }
    }
}

fn eigvec(j: [[f64; 2]; 2], mu: f64) -> [f64; 2] {
    let [[a, b], [c, d]] = j;
    // rows of (J - mu I) are orthogonal to the eigenvector; use the larger
    let r1 = [b, mu - a];
    let r2 = [mu - d, c];
    let n1 = r1[0].hypot(r1[1]);
    let n2 = r2[0].hypot(r2[1]);
    let (v, n) = if n1 >= n2 { (r1, n1) } else { (r2, n2) };
    let mut v = [v[0] / n, v[1] / n];
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    v
}

/// Jacobian of the canonical system at `ss` by central differences.
pub fn linearize(spec: &ProblemSpec, ss: &SteadyState) -> Result<LinearizationReport> {
    let spec = phase_problem(spec)?;
    let (x, c) = (ss.x_star, ss.c_star);
    let hx = 1e-6 * x.abs().max(1e-3);
    let hc = 1e-6 * c.abs().max(1e-3);
    let dx_plus = euler_rhs(&spec, x + hx, c, 0.0)?;
    let dx_minus = euler_rhs(&spec, x - hx, c, 0.0)?;
    let dc_plus = euler_rhs(&spec, x, c + hc, 0.0)?;
    let dc_minus = euler_rhs(&spec, x, c - hc, 0.0)?;
    let j = [
        [
            (dx_plus.0 - dx_minus.0) / (2.0 * hx),
            (dc_plus.0 - dc_minus.0) / (2.0 * hc),
        ],
        [
            (dx_plus.1 - dx_minus.1) / (2.0 * hx),
            (dc_plus.1 - dc_minus.1) / (2.0 * hc),
        ],
    ];
    Ok(LinearizationReport::from_jacobian(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramsey() -> ProblemSpec {
        ProblemSpec::growth(0.03, "ln(c)", "x^0.3", 1.0).unwrap()
    }

    fn bisect_oracle(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == (g(lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn ramsey_steady_state() {
        let ss = find_steady_state(&ramsey(), None).unwrap();
        // f'(x) = θ by plain bisection
        let oracle = bisect_oracle(|x| 0.3 * x.powf(-0.7) - 0.03, 1.0, 100.0);
        assert!((ss.x_star - oracle).abs() <= 1e-10 * oracle);
        assert!((ss.x_star - 26.8269).abs() < 1e-4);
        assert!((ss.c_star - ss.x_star.powf(0.3)).abs() < 1e-12);
        assert!((ss.c_star - 2.6827).abs() < 1e-4);
        assert!(ss.residuals.0 < 1e-12 && ss.residuals.1 < 1e-12);
        assert!((ss.m_star - 1.0 / ss.c_star).abs() < 1e-14);
    }

    #[test]
    fn wealth_in_utility_steady_state() {
        let spec = ProblemSpec::growth(0.03, "ln(c) + ln(x)", "0.01*x + 0.2", 1.0).unwrap();
        let ss = find_steady_state(&spec, None).unwrap();
        let (r, theta) = (0.01, 0.03);
        let resid = (r - theta) / (r * ss.x_star + 0.2) + 1.0 / ss.x_star;
        assert!(resid.abs() < 1e-12, "{resid}");
        assert!((ss.x_star - 20.0).abs() < 1e-9);
    }

    #[test]
    fn no_steady_state_when_r_equals_theta() {
        let spec = ProblemSpec::linear_wealth(0.03, "ln(c)", "0.03", "0.2", 1.0).unwrap();
        let e = find_steady_state(&spec, None).unwrap_err();
        assert!(matches!(e, Error::NoSignChange { .. }));
        assert!(e.to_string().contains("no sign change"));
    }

    #[test]
    fn explicit_bracket() {
        let ss = find_steady_state(&ramsey(), Some((10.0, 40.0))).unwrap();
        assert!((ss.x_star - 26.8269).abs() < 1e-4);
        assert!(find_steady_state(&ramsey(), Some((30.0, 40.0))).is_err());
    }

    #[test]
    fn ramsey_is_saddle() {
        let spec = ramsey();
        let ss = find_steady_state(&spec, None).unwrap();
        let lin = linearize(&spec, &ss).unwrap();
        assert!(lin.determinant() < 0.0);
        assert!(lin.saddle);
        // u = ln(c) gives ċ = c (f'(x) - θ), so J = [[f', -1], [c f'', 0]]
        let fpp = 0.3 * (-0.7) * ss.x_star.powf(-1.7);
        assert!((lin.jacobian[0][0] - 0.03).abs() < 1e-8);
        assert!((lin.jacobian[0][1] + 1.0).abs() < 1e-8);
        assert!((lin.jacobian[1][0] - ss.c_star * fpp).abs() < 1e-8);
        assert!(lin.jacobian[1][1].abs() < 1e-8);
        let (mu_s, mu_u) = lin.saddle_rates().unwrap();
        assert!(mu_s < 0.0 && mu_u > 0.0);
        for mu in [mu_s, mu_u] {
            let p = mu * mu - lin.trace() * mu + lin.determinant();
            assert!(p.abs() < 1e-10, "{p}");
        }
        let v = lin.stable_eigvec.unwrap();
        let j = lin.jacobian;
        assert!((j[0][0] * v[0] + j[0][1] * v[1] - mu_s * v[0]).abs() < 1e-12);
        assert!(v[0] > 0.0 && v[1] > 0.0, "stable arm slopes upward");
    }

    #[test]
    fn degenerate_jacobian_flagged() {
        let lin = LinearizationReport::from_jacobian([[0.0, -1.0], [0.0, 0.0]]);
        assert!(!lin.saddle);
        assert!(lin.flag.is_some());
        assert_eq!(lin.eigenvalues, Eigenvalues::Real { mu1: 0.0, mu2: 0.0 });
    }

    #[test]
    fn complex_pair() {
        let lin = LinearizationReport::from_jacobian([[0.0, -1.0], [1.0, 0.0]]);
        assert_eq!(lin.eigenvalues, Eigenvalues::Complex { re: 0.0, im: 1.0 });
        assert!(!lin.saddle);
    }
}
