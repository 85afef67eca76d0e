//! Necessary-condition and sufficiency verdicts for candidate paths.

use serde::Serialize;

use crate::checks::{
    assumption_suite, check_h_concavity, tail_integral_estimate, CheckConfig, CheckReport, PairSampler, SampleBox,
    ScalingCertificate, TailEstimate,
};
use crate::expr::{Bindings, Order, Var};
use crate::hamiltonian::{foc_residuals, multiplier_from_path, FocResiduals, MultiplierPath};
use crate::numeric::{linear_fit, logspace};
use crate::problem::{feasibility_check, AdmissiblePath, FeasibilityReport, ProblemSpec};
use crate::{Error, Result};

/// Thresholds shared by [`verify_necessary`] and [`certify_sufficient`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyTolerances {
    pub feasibility: f64,
    /// `sup |r_c| <= foc_c_rel * (1 + sup |λ|)`.
    pub foc_c_rel: f64,
    /// Costate threshold is `max(costate_min, costate_fd_factor * fd_floor)`.
    pub costate_min: f64,
    pub costate_fd_factor: f64,
    pub tvc: f64,
    /// Relative slack of the Hamiltonian-maximization fallback.
    pub hmax_rel: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-6,
            foc_c_rel: 1e-8,
            costate_min: 1e-6,
            costate_fd_factor: 10.0,
            tvc: 1e-6,
            hmax_rel: 1e-10,
        }
    }
}

impl VerifyTolerances {
    pub fn foc_c_threshold(&self, m: &MultiplierPath) -> f64 {
        let sup = m.lambda.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.foc_c_rel * (1.0 + sup)
    }

    pub fn costate_threshold(&self, foc: &FocResiduals) -> f64 {
        self.costate_min.max(self.costate_fd_factor * foc.fd_floor)
    }
}

/// Samples of `λ(t) x(t)` and their tail behaviour.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvcEstimate {
    #[serde(skip)]
    pub t: Vec<f64>,
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub last_t: f64,
    pub last: f64,
    /// Log-linear decay rate of `|λx|` over the last half of the grid;
    /// `None` when every sample there is zero.
    pub fitted_rate: Option<f64>,
    pub extrapolated_limit: f64,
    /// Earliest time from which the samples are non-increasing.
    pub decreasing_from: Option<f64>,
    /// `inf c` over the last half of the grid.
    pub tail_inf_c: f64,
    /// Log-linear rate of `e^{-θt} x(t)` over the last half of the grid.
    pub discounted_x_rate: Option<f64>,
    pub tol: f64,
    /// `None` without the state constraint: only `limsup λx <= 0` is
    /// implied there, so no verdict is given.
    pub pass: Option<bool>,
}

pub fn estimate_tvc(spec: &ProblemSpec, path: &AdmissiblePath, m: &MultiplierPath, tol: f64) -> TvcEstimate {
    let n = path.len();
    let samples: Vec<f64> = m.lambda.iter().zip(&path.x).map(|(l, x)| l * x).collect();
    let half = n / 2;
    let log_fit = |values: &[f64]| {
        let (ts, ls): (Vec<f64>, Vec<f64>) = (half..n)
            .filter(|k| values[*k] != 0.0)
            .map(|k| (path.t[k], values[k].abs().ln()))
            .unzip();
        linear_fit(&ts, &ls).map(|(s, _)| s)
    };
    let fitted_rate = log_fit(&samples);
    let disc_x: Vec<f64> = (0..n).map(|k| spec.discount(path.t[k]) * path.x[k]).collect();
    let last = samples[n - 1];
    let all_zero = samples[half..].iter().all(|v| *v == 0.0);
    let extrapolated_limit = match fitted_rate {
        None => 0.0,
        Some(r) if r < 0.0 => 0.0,
        Some(r) if r == 0.0 => last,
        Some(_) => f64::INFINITY.copysign(last),
    };
    let mut start = n - 1;
    while start > 0 && samples[start - 1] >= samples[start] {
        start -= 1;
    }
    let decreasing_from = (start < n - 1).then(|| path.t[start]);
    let pass = spec
        .state_nonneg
        .then(|| all_zero || (last <= tol && fitted_rate.is_some_and(|r| r < 0.0)));
    TvcEstimate {
        last_t: path.t[n - 1],
        last,
        fitted_rate,
        extrapolated_limit,
        decreasing_from,
        tail_inf_c: path.c[half..].iter().copied().fold(f64::INFINITY, f64::min),
        discounted_x_rate: log_fit(&disc_x),
        tol,
        pass,
        t: path.t.clone(),
        samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violated {
        condition: String,
        t: Option<f64>,
        value: f64,
        threshold: f64,
    },
}

impl Verdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Verdict::Consistent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NecessaryReport {
    pub feasibility: FeasibilityReport,
    /// `None` when the multiplier could not be formed.
    pub foc: Option<FocResiduals>,
    pub foc_c_threshold: f64,
    pub costate_threshold: f64,
    pub tvc: Option<TvcEstimate>,
    pub objective: Option<TailEstimate>,
    pub assumptions: CheckReport,
    pub verdict: Verdict,
}

fn violated(condition: &str, t: Option<f64>, value: f64, threshold: f64) -> Verdict {
    Verdict::Violated {
        condition: condition.to_string(),
        t,
        value,
        threshold,
    }
}

/// Feasibility, first-order conditions, transversality and the sampled
/// assumptions, checked in that order; the first failure names the verdict.
///
/// A supplied multiplier is used as is. Without one it is derived from
/// `λ = e^{-θt} u_c`, which makes the control FOC hold by construction.
pub fn verify_necessary(
    spec: &ProblemSpec,
    path: &AdmissiblePath,
    m: Option<&MultiplierPath>,
    cert: Option<&ScalingCertificate>,
    tol: &VerifyTolerances,
    checks: &CheckConfig,
) -> NecessaryReport {
    let feasibility = feasibility_check(path, spec, tol.feasibility);
    let assumptions = assumption_suite(spec, cert, checks);
    let mut verdict = Verdict::Consistent;
    let mut note = |v: Verdict| {
        if verdict.is_consistent() {
            verdict = v;
        }
    };
    if !feasibility.pass {
        note(violated(
            "feasibility",
            Some(feasibility.worst_t),
            feasibility.max_scaled_residual,
            tol.feasibility,
        ));
    }
    let derived;
    let m = match m {
        Some(m) => Ok(m),
        None => match multiplier_from_path(spec, path) {
            Ok(d) => {
                derived = d;
                Ok(&derived)
            }
            Err(e) => Err(e),
        },
    };
    let (mut foc, mut tvc, mut foc_c_threshold, mut costate_threshold) = (None, None, 0.0, 0.0);
    match m.and_then(|m| foc_residuals(spec, path, m).map(|f| (m, f))) {
        Ok((m, f)) => {
            foc_c_threshold = tol.foc_c_threshold(m);
            costate_threshold = tol.costate_threshold(&f);
            if f.sup_r_c > foc_c_threshold {
                note(violated("foc_control", Some(f.argmax_r_c), f.sup_r_c, foc_c_threshold));
            }
            if f.sup_r_costate > costate_threshold {
                note(violated(
                    "foc_costate",
                    Some(f.argmax_r_costate),
                    f.sup_r_costate,
                    costate_threshold,
                ));
            }
            let est = estimate_tvc(spec, path, m, tol.tvc);
            if est.pass == Some(false) {
                note(violated("transversality", Some(est.last_t), est.last, tol.tvc));
            }
            foc = Some(f);
            tvc = Some(est);
        }
        Err(e) => note(violated(&format!("multiplier: {e}"), None, f64::NAN, 0.0)),
    }
    let objective = match tail_integral_estimate(spec, path) {
        Ok(est) => {
            if est.diverges {
                note(violated(
                    "integrability",
                    Some(path.horizon()),
                    est.growth_rate,
                    spec.theta,
                ));
            }
            Some(est)
        }
        Err(e) => {
            note(violated(&format!("objective: {e}"), None, f64::NAN, 0.0));
            None
        }
    };
    if let Some(rec) = assumptions.first_failure() {
        let margin = rec.worst.as_ref().map_or(f64::NAN, |w| w.margin);
        note(violated(&format!("assumption: {}", rec.name), None, margin, 0.0));
    }
    NecessaryReport {
        feasibility,
        foc,
        foc_c_threshold,
        costate_threshold,
        tvc,
        objective,
        assumptions,
        verdict,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FocMode {
    /// `∂H/∂c = 0` within tolerance.
    Stationarity,
    /// `c` maximizes `H(x, ., t, λ)` on a consumption grid.
    HamiltonianMax,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub objective: Option<TailEstimate>,
    /// `(lower, upper)` bounds on the discounted objective.
    pub objective_value: (f64, f64),
    pub feasible: bool,
    pub foc_mode: FocMode,
    pub foc_pass: bool,
    pub tvc_pass: bool,
    pub concavity_pass: bool,
    /// The state set is `R+ x R`.
    pub state_domain_ok: bool,
    pub optimal: bool,
    pub unique: bool,
    pub notes: Vec<String>,
}

/// `u_cc < 0` and a negative semi-definite `(c, x)` Hessian of `u` on the box.
pub fn strictly_concave_u(spec: &ProblemSpec, samples: &SampleBox) -> bool {
    for c in samples.c_values() {
        for x in samples.x_values() {
            let Ok(u) = spec.u_at(c, x, Order::Second) else {
                return false;
            };
            let (a, b, d) = (
                u.second(Var::C, Var::C),
                u.second(Var::C, Var::X),
                u.second(Var::X, Var::X),
            );
            let top = 0.5 * (a + d) + (0.25 * (a - d).powi(2) + b * b).sqrt();
            if !(a < 0.0) || top > 1e-12 * (a.abs() + b.abs() + d.abs()) {
                return false;
            }
        }
    }
    true
}

fn hamiltonian_max_holds(spec: &ProblemSpec, path: &AdmissiblePath, m: &MultiplierPath, rel: f64) -> bool {
    let n = path.len();
    let stride = (n / 200).max(1);
    (0..n).step_by(stride).all(|k| {
        let (t, x, c, lam) = (path.t[k], path.x[k], path.c[k], m.lambda[k]);
        let h = |c: f64| {
            let u = spec.u.eval(&Bindings::cxt(c, x, t)).ok()?;
            let f = spec.f.eval(&Bindings::cxt(c, x, t)).ok()?;
            Some(spec.discount(t) * u + lam * (f - c))
        };
        let Some(h_path) = h(c) else { return false };
        let lo = (c * 1e-3).max(1e-12);
        let best = logspace(lo, c.max(lo) * 1e3, 401)
            .into_iter()
            .filter_map(h)
            .fold(f64::NEG_INFINITY, f64::max);
        h_path >= best - rel * (1.0 + h_path.abs())
    })
}

/// Sufficient conditions for optimality within the state set `R+ x R`.
///
/// The control condition is accepted either as stationarity of `H` in `c`
/// or, failing that, as maximization of `H` over a consumption grid.
pub fn certify_sufficient(
    spec: &ProblemSpec,
    path: &AdmissiblePath,
    m: Option<&MultiplierPath>,
    tol: &VerifyTolerances,
) -> Certificate {
    let mut notes = Vec::new();
    let feasible = feasibility_check(path, spec, tol.feasibility).pass;
    let objective = tail_integral_estimate(spec, path).ok();
    let objective_value = objective.as_ref().map_or((f64::NAN, f64::NAN), |o| (o.lower, o.upper));
    let objective_finite = objective.as_ref().is_some_and(|o| !o.diverges && o.lower.is_finite());
    if !objective_finite {
        notes.push("objective not shown finite".into());
    }
    let derived;
    let m = match m {
        Some(m) => Some(m),
        None => match multiplier_from_path(spec, path) {
            Ok(d) => {
                derived = d;
                Some(&derived)
            }
            Err(e) => {
                notes.push(format!("multiplier: {e}"));
                None
            }
        },
    };
    let (mut foc_mode, mut foc_pass, mut tvc_pass, mut concavity_pass) = (FocMode::Failed, false, false, false);
    if let Some(m) = m {
        match foc_residuals(spec, path, m) {
            Ok(f) => {
                let costate_ok = f.sup_r_costate <= tol.costate_threshold(&f);
                if !costate_ok {
                    notes.push(format!(
                        "costate residual {:.3e} at t = {}",
                        f.sup_r_costate, f.argmax_r_costate
                    ));
                }
                if f.sup_r_c <= tol.foc_c_threshold(m) {
                    foc_mode = FocMode::Stationarity;
                } else if hamiltonian_max_holds(spec, path, m, tol.hmax_rel) {
                    foc_mode = FocMode::HamiltonianMax;
                }
                foc_pass = costate_ok && foc_mode != FocMode::Failed;
            }
            Err(e) => notes.push(format!("FOC residuals: {e}")),
        }
        tvc_pass = estimate_tvc(spec, path, m, tol.tvc).pass == Some(true);
        let mut lam: Vec<f64> = m.lambda.iter().map(|l| l.max(0.0)).collect();
        lam.sort_by(f64::total_cmp);
        let lambda_samples = [lam[0], lam[lam.len() / 2], lam[lam.len() - 1]];
        let t_samples = [path.t[0], path.t[path.len() / 2], path.horizon()];
        match check_h_concavity(spec, &t_samples, &lambda_samples, &PairSampler::default()) {
            Ok(r) => {
                concavity_pass = r.pass;
                if let Some(n) = r.note.filter(|_| !r.pass) {
                    notes.push(n);
                }
            }
            Err(e) => notes.push(format!("concavity: {e}")),
        }
    }
    let min_x = path.x.iter().copied().fold(f64::INFINITY, f64::min);
    let state_domain_ok = spec.state_nonneg && min_x >= -tol.feasibility;
    if !spec.state_nonneg {
        notes.push("no certificate outside the state set R+ x R".into());
    }
    let optimal = feasible && objective_finite && foc_pass && tvc_pass && concavity_pass && state_domain_ok;
    let unique = optimal && strictly_concave_u(spec, &SampleBox::default());
    Certificate {
        objective,
        objective_value,
        feasible,
        foc_mode,
        foc_pass,
        tvc_pass,
        concavity_pass,
        state_domain_ok,
        optimal,
        unique,
        notes,
    }
}

/// Closed-form path of the log-utility consumer-saving problem with
/// constant `R`, `ω` and an arbitrary `c(0)`:
///
/// ```text
/// c(t) = c0 e^{(R-θ)t}
/// x(t) = (c0/θ) e^{(R-θ)t} + (x0 + ω/R - c0/θ) e^{Rt} - ω/R
/// λ(t) = e^{-θt} / c(t)
/// ```
pub fn example1_path_with_c0(
    r: f64,
    omega: f64,
    theta: f64,
    x0: f64,
    c0: f64,
    grid: &[f64],
) -> Result<(AdmissiblePath, MultiplierPath)> {
    if !(r > 0.0 && theta > 0.0 && omega >= 0.0 && x0 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need R > 0, theta > 0, omega >= 0, x0 >= 0 (got R = {r}, omega = {omega}, theta = {theta}, x0 = {x0})"
        )));
    }
    if !(c0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "c(0) = {c0}: consumption must stay strictly positive"
        )));
    }
    let k = x0 + omega / r - c0 / theta;
    build_example1(r, omega, theta, c0, k, grid)
}

/// The optimal path with `c(0) = θ (x0 + ω/R)`, for which the `e^{Rt}`
/// coefficient vanishes and is dropped exactly.
pub fn closed_form_example1(
    r: f64,
    omega: f64,
    theta: f64,
    x0: f64,
    grid: &[f64],
) -> Result<(AdmissiblePath, MultiplierPath)> {
    if !(r > 0.0 && theta > 0.0 && omega >= 0.0 && x0 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need R > 0, theta > 0, omega >= 0, x0 >= 0 (got R = {r}, omega = {omega}, theta = {theta}, x0 = {x0})"
        )));
    }
    let c0 = theta * (x0 + omega / r);
    if !(c0 > 0.0) {
        return Err(Error::InvalidArgument(
            "x0 + omega/R = 0 gives zero consumption; an interior solution needs wealth or income".into(),
        ));
    }
    build_example1(r, omega, theta, c0, 0.0, grid)
}

fn build_example1(
    r: f64,
    omega: f64,
    theta: f64,
    c0: f64,
    k: f64,
    grid: &[f64],
) -> Result<(AdmissiblePath, MultiplierPath)> {
    let g = r - theta;
    let path = AdmissiblePath::from_fn(grid, |t| {
        let e = (g * t).exp();
        let x = c0 / theta * e + if k == 0.0 { 0.0 } else { k * (r * t).exp() } - omega / r;
        (x, c0 * e)
    })?;
    let lambda = grid.iter().map(|t| (-theta * t).exp() / (c0 * (g * t).exp())).collect();
    Ok((path, MultiplierPath::new(grid.to_vec(), lambda)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::{builtin_certificate, UtilityFamily};
    use crate::numeric::linspace;

    fn example1() -> ProblemSpec {
        ProblemSpec::linear_wealth(0.03, "ln(c)", "0.05", "0.2", 1.0).unwrap()
    }

    fn quick_checks() -> CheckConfig {
        CheckConfig {
            samples: SampleBox::square(1e-2, 1e2, 16),
            pairs: PairSampler {
                pairs: 64,
                ..PairSampler::default()
            },
            lambda_points: 16,
            ..CheckConfig::default()
        }
    }

    fn log_cert() -> ScalingCertificate {
        builtin_certificate(UtilityFamily::Log, 0.5).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let grid = linspace(0.0, 100.0, 11);
        let (p, m) = closed_form_example1(0.05, 0.2, 0.03, 1.0, &grid).unwrap();
        assert!((p.c[0] - 0.15).abs() < 1e-15);
        for k in 0..grid.len() {
            let t = grid[k];
            let x = 5.0 * (0.02 * t).exp() - 4.0;
            assert!((p.x[k] - x).abs() <= 1e-12 * x.abs());
            assert!((m.lambda[k] - (-0.05 * t).exp() / 0.15).abs() <= 1e-12 * m.lambda[k]);
        }
    }

    #[test]
    fn closed_form_degenerate_and_balanced() {
        let grid = linspace(0.0, 10.0, 11);
        assert!(closed_form_example1(0.05, 0.0, 0.03, 0.0, &grid).is_err());
        assert!(closed_form_example1(-0.05, 0.2, 0.03, 1.0, &grid).is_err());
        let (p, _) = closed_form_example1(0.03, 0.2, 0.03, 1.0, &grid).unwrap();
        let c0 = 0.03 * (1.0 + 0.2 / 0.03);
        assert!(p.c.iter().all(|c| (c - c0).abs() < 1e-15));
        assert!(p.x.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn necessary_conditions_on_closed_form() {
        let grid = linspace(0.0, 600.0, 20_001);
        let (p, m) = closed_form_example1(0.05, 0.2, 0.03, 1.0, &grid).unwrap();
        let r = verify_necessary(
            &example1(),
            &p,
            Some(&m),
            Some(&log_cert()),
            &VerifyTolerances::default(),
            &quick_checks(),
        );
        assert!(r.verdict.is_consistent(), "{:?}", r.verdict);
        let tvc = r.tvc.unwrap();
        // λx = e^{-θt}/θ - (ω/(R c0)) e^{-Rt}
        let expect = (-18.0f64).exp() / 0.03 - (0.2 / (0.05 * 0.15)) * (-30.0f64).exp();
        assert!((tvc.last - expect).abs() < 1e-12 * expect);
        assert!(tvc.last <= 1e-6 && (tvc.last - 5.1e-7).abs() < 1e-8);
        assert_eq!(tvc.pass, Some(true));
    }

    #[test]
    fn doubled_consumption_breaks_supplied_multiplier() {
        let grid = linspace(0.0, 600.0, 6001);
        let (mut p, m) = closed_form_example1(0.05, 0.2, 0.03, 1.0, &grid).unwrap();
        p.c.iter_mut().for_each(|c| *c *= 2.0);
        let r = verify_necessary(
            &example1(),
            &p,
            Some(&m),
            None,
            &VerifyTolerances::default(),
            &quick_checks(),
        );
        match r.verdict {
            Verdict::Violated { condition, .. } => {
                // the doubled path also breaks the budget; the control FOC
                // witness still sits at t = 0, where λ is largest
                assert_eq!(condition, "feasibility");
                let f = r.foc.unwrap();
                assert_eq!(f.argmax_r_c, 0.0);
                assert!(f.sup_r_c > 1.0);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn stationary_ramsey_path() {
        let spec = ProblemSpec::growth(0.03, "ln(c)", "x^0.3", 1.0).unwrap();
        let ss = crate::solver::find_steady_state(&spec, None).unwrap();
        let grid = linspace(0.0, 600.0, 6001);
        let p = AdmissiblePath::from_fn(&grid, |_| (ss.x_star, ss.c_star)).unwrap();
        let r = verify_necessary(
            &spec,
            &p,
            None,
            Some(&log_cert()),
            &VerifyTolerances::default(),
            &quick_checks(),
        );
        assert!(r.verdict.is_consistent(), "{:?}", r.verdict);
        let tvc = r.tvc.unwrap();
        assert!((tvc.fitted_rate.unwrap() + 0.03).abs() < 1e-9);
        let m = multiplier_from_path(&spec, &p).unwrap();
        let f = foc_residuals(&spec, &p, &m).unwrap();
        assert!(f.sup_r_costate <= 1e-8 + f.fd_floor);
    }

    #[test]
    fn tvc_examples() {
        let spec = example1();
        let grid = linspace(0.0, 600.0, 601);
        let p = AdmissiblePath::from_fn(&grid, |_| (1.0, 0.25)).unwrap();
        let m = MultiplierPath::new(grid.clone(), grid.iter().map(|t| (-0.03 * t).exp() / 0.03).collect()).unwrap();
        let e = estimate_tvc(&spec, &p, &m, 1e-6);
        assert!((e.last - (-18.0f64).exp() / 0.03).abs() < 1e-15);
        assert_eq!(e.pass, Some(true));

        let zero = AdmissiblePath::from_fn(&grid, |_| (0.0, 0.2)).unwrap();
        assert_eq!(estimate_tvc(&spec, &zero, &m, 1e-6).pass, Some(true));

        let ones = MultiplierPath::new(grid.clone(), vec![1.0; grid.len()]).unwrap();
        let e = estimate_tvc(&spec, &p, &ones, 1e-6);
        assert_eq!(e.fitted_rate, Some(0.0));
        assert_eq!(e.pass, Some(false));

        let mut free = spec.clone();
        free.state_nonneg = false;
        assert_eq!(estimate_tvc(&free, &p, &m, 1e-6).pass, None);
    }

    #[test]
    fn certificate_for_closed_form() {
        let grid = linspace(0.0, 600.0, 20_001);
        let (p, m) = closed_form_example1(0.05, 0.2, 0.03, 1.0, &grid).unwrap();
        let c = certify_sufficient(&example1(), &p, Some(&m), &VerifyTolerances::default());
        assert!(c.optimal && c.unique, "{c:?}");
        assert_eq!(c.foc_mode, FocMode::Stationarity);
        let (lo, hi) = c.objective_value;
        let exact = 0.15f64.ln() / 0.03 + 0.02 / (0.03 * 0.03);
        assert!(lo <= exact && exact <= hi);
    }

    #[test]
    fn under_consumption_fails_transversality() {
        let grid = linspace(0.0, 600.0, 20_001);
        let (p, m) = example1_path_with_c0(0.05, 0.2, 0.03, 1.0, 0.10, &grid).unwrap();
        let c = certify_sufficient(&example1(), &p, Some(&m), &VerifyTolerances::default());
        assert!(!c.tvc_pass);
        assert!(!c.optimal);
        let e = estimate_tvc(&example1(), &p, &m, 1e-6);
        // λx -> (x0 + ω/R - c0/θ)/c0
        let plateau = (5.0 - 0.10 / 0.03) / 0.10;
        assert!((e.last - plateau).abs() < 1e-3 * plateau);
    }

    #[test]
    fn linear_utility_is_not_unique() {
        let spec = ProblemSpec::growth(0.03, "c", "x^0.3", 1.0).unwrap();
        let grid = linspace(0.0, 10.0, 101);
        let p = AdmissiblePath::from_fn(&grid, |_| (1.0, 1.0)).unwrap();
        let c = certify_sufficient(&spec, &p, None, &VerifyTolerances::default());
        assert!(c.concavity_pass);
        assert!(!c.unique);
        assert!(!strictly_concave_u(&spec, &SampleBox::default()));
        assert!(strictly_concave_u(&example1(), &SampleBox::default()));
    }

    #[test]
    fn hamiltonian_maximization_fallback() {
        // supplied λ off by a constant factor: stationarity fails, and c is
        // then not the maximizer either
        let grid = linspace(0.0, 50.0, 501);
        let (p, m) = closed_form_example1(0.05, 0.2, 0.03, 1.0, &grid).unwrap();
        assert!(hamiltonian_max_holds(&example1(), &p, &m, 1e-10));
        let scaled = MultiplierPath::new(m.t.clone(), m.lambda.iter().map(|l| 1.5 * l).collect()).unwrap();
        assert!(!hamiltonian_max_holds(&example1(), &p, &scaled, 1e-10));
    }
}
