//! Shooting on `c(0)` and backward integration of the stable arm.

use serde::Serialize;

use super::steady::{find_steady_state, linearize, phase_problem, LinearizationReport, SteadyState};
use super::{run_system, trajectory_from_run, EventKind, Trajectory, OVERFLOW_GUARD};
use crate::expr::{Order, Var};
use crate::hamiltonian::{euler_rhs, multiplier_from_path, MultiplierPath};
use crate::numeric::linspace;
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// `max(50, 10/θ, (ln(1/(θ tol_tvc)) + ln 10)/θ)`.
///
/// The last term makes `e^{-θT}/θ <= tol_tvc / 10`, the leading term of the
/// transversality proxy on balanced-growth paths.
pub fn default_horizon(theta: f64, tol_tvc: f64) -> f64 {
    let tvc = ((1.0 / (theta * tol_tvc)).ln() + 10f64.ln()) / theta;
    50f64.max(10.0 / theta).max(tvc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingConfig {
    /// Horizon length `T` (from `t0`); `None` uses [`default_horizon`].
    pub horizon: Option<f64>,
    pub tol_c0: f64,
    pub tol_tvc: f64,
    /// Relative tolerance of the integrator.
    pub integ_tol: f64,
    /// Initial `(c_lo, c_hi)`; `None` uses `(1e-6 f(x0), 2 f(x0))`.
    pub bracket: Option<(f64, f64)>,
    /// Reporting grid size of the returned trajectory.
    pub n_report: usize,
    /// Bisection steps per shot.
    pub max_iter: usize,
    /// Keep bisecting below `tol_c0` while classifications stay decisive.
    pub refine_to_roundoff: bool,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            tol_c0: 1e-10,
            tol_tvc: 1e-6,
            integ_tol: 1e-10,
            bracket: None,
            n_report: 10001,
            max_iter: 200,
            refine_to_roundoff: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Initial consumption too high: wealth is eventually exhausted.
    High,
    /// Initial consumption too low: wealth over-accumulates.
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationEntry {
    /// Start of the classified run.
    pub t_start: f64,
    pub c0: f64,
    pub class: Classification,
    pub reason: String,
    pub t_decided: f64,
    /// `false` when the run ended undecided and a tie-break rule was used.
    pub decisive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootingResult {
    pub c0: f64,
    pub horizon: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
    #[serde(skip)]
    pub multiplier: MultiplierPath,
    pub tvc_proxy_at_t: f64,
    pub bracket_width: f64,
    pub iterations: usize,
    pub steady_state: Option<SteadyState>,
    /// Times after `t0` at which `c` was shot again from the current state.
    pub reshoot_times: Vec<f64>,
    /// Largest change of `c` at a re-shot, relative to `c`.
    pub max_reshoot_jump: f64,
    #[serde(skip)]
    pub classification_log: Vec<ClassificationEntry>,
    /// Bracket converged, horizon reached and the proxy is below `tol_tvc`.
    pub verified: bool,
}

enum Regime {
    Saddle {
        ss: SteadyState,
        lin: LinearizationReport,
    },
    /// No rest point and `u` independent of `x`.
    Trend,
}

struct Shooter<'a> {
    spec: &'a ProblemSpec,
    regime: Regime,
    end: f64,
    horizon: f64,
    tol: f64,
}

impl Shooter<'_> {
    fn xdot(&self, t: f64, y: [f64; 2]) -> f64 {
        self.spec.f.value(0.0, y[0], t) - y[1]
    }

    /// `d(x/c)/dt > 0`. Along an optimal trend path `x/c` settles down,
    /// while the over-saving mode makes it grow like `e^{θt}`.
    fn ratio_rising(&self, t: f64, y: [f64; 2]) -> bool {
        match euler_rhs(self.spec, y[0], y[1], t) {
            Ok((xd, cd)) => xd * y[1] - y[0] * cd > 0.0,
            Err(_) => false,
        }
    }

    /// Window length over which the divergent mode grows by `e^10`.
    fn window(&self) -> f64 {
        match &self.regime {
            Regime::Saddle { lin, .. } => 10.0 / lin.saddle_rates().unwrap().1,
            Regime::Trend => 10.0 / self.spec.theta,
        }
    }

    fn classify(&self, t_start: f64, x: f64, c0: f64) -> Result<ClassificationEntry> {
        let mut decided: Option<(Classification, &'static str, f64)> = None;
        let stop = |t: f64, y: [f64; 2]| {
            let verdict = match &self.regime {
                Regime::Saddle { ss, .. } => {
                    let xd = self.xdot(t, y);
                    if x <= ss.x_star {
                        if y[0] > ss.x_star {
                            Some((Classification::Low, "x rose above x*"))
                        } else if xd < 0.0 {
                            Some((Classification::High, "x turned down below x*"))
                        } else {
                            None
                        }
                    } else if y[0] < ss.x_star {
                        Some((Classification::High, "x fell below x*"))
                    } else if xd > 0.0 {
                        Some((Classification::Low, "x turned up above x*"))
                    } else {
                        None
                    }
                }
                Regime::Trend => {
                    (t >= self.end && self.ratio_rising(t, y)).then_some((Classification::Low, "x/c rising after T"))
                }
            };
            match verdict {
                Some((class, why)) => {
                    decided = Some((class, why, t));
                    true
                }
                None => false,
            }
        };
        let t_cap = t_start.max(self.end) + self.horizon;
        let run = run_system(self.spec, [x, c0], &[t_start, t_cap], self.tol, stop)?;
        let (class, reason, t, decisive) = if let Some((class, why, t)) = decided {
            (class, why.to_string(), t, true)
        } else if let Some(ev) = run.event {
            let class = match ev.kind {
                EventKind::StateZero => Classification::High,
                EventKind::ControlZero => Classification::Low,
                EventKind::Overflow => {
                    let (t, y) = *run.samples.last().unwrap();
                    let low = match self.regime {
                        Regime::Trend => y[0] > 0.0 && self.ratio_rising(t, y),
                        Regime::Saddle { .. } => y[0].abs() >= OVERFLOW_GUARD && y[0] > 0.0,
                    };
                    if low {
                        Classification::Low
                    } else {
                        Classification::High
                    }
                }
                EventKind::Stopped => unreachable!("stop decisions are recorded above"),
            };
            (class, ev.to_string(), ev.t, true)
        } else {
            let (t, y) = *run.samples.last().unwrap();
            match &self.regime {
                Regime::Saddle { ss, lin } => {
                    let v = lin.stable_eigvec.unwrap();
                    let arm = ss.c_star + v[1] / v[0] * (y[0] - ss.x_star);
                    let class = if y[1] > arm {
                        Classification::High
                    } else {
                        Classification::Low
                    };
                    (class, "undecided; compared with the linear stable arm".into(), t, false)
                }
                Regime::Trend => (Classification::High, "undecided; treated as high".into(), t, false),
            }
        };
        Ok(ClassificationEntry {
            t_start,
            c0,
            class,
            reason,
            t_decided: t,
            decisive,
        })
    }

    /// Bisection from state `x` at `t_start`. Returns `(c, width, steps)`.
    fn bisect(
        &self,
        t_start: f64,
        x: f64,
        (mut lo, mut hi): (f64, f64),
        expand: bool,
        config: &ShootingConfig,
        log: &mut Vec<ClassificationEntry>,
    ) -> Result<(f64, f64, usize)> {
        let mut grow = 0;
        loop {
            let a = self.classify(t_start, x, lo)?;
            let b = self.classify(t_start, x, hi)?;
            let ok = (a.class, b.class) == (Classification::Low, Classification::High);
            let (a_low, b_high) = (a.class == Classification::Low, b.class == Classification::High);
            log.push(a);
            log.push(b);
            if ok {
                break;
            }
            if grow == 8 || !expand {
                return Err(Error::Bracket { lo, hi });
            }
            let width = hi - lo;
            if !a_low {
                lo = (lo - width).max(0.1 * lo);
            }
            if !b_high {
                hi += width;
            }
            grow += 1;
        }
        let mut steps = 0;
        while steps < config.max_iter {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let width_ok = hi - lo <= config.tol_c0;
            if width_ok && !config.refine_to_roundoff {
                break;
            }
            let e = self.classify(t_start, x, mid)?;
            steps += 1;
            let decisive = e.decisive;
            match e.class {
                Classification::High => hi = mid,
                Classification::Low => lo = mid,
            }
            log.push(e);
            if width_ok && !decisive {
                break;
            }
        }
        Ok((0.5 * (lo + hi), hi - lo, steps))
    }
}

fn regime_for(spec: &ProblemSpec) -> Result<Regime> {
    let phase = phase_problem(spec)?;
    match find_steady_state(&phase, None) {
        Ok(ss) => {
            let lin = linearize(&phase, &ss)?;
            if !lin.saddle {
                return Err(Error::NotSaddle);
            }
            Ok(Regime::Saddle { ss, lin })
        }
        Err(Error::NoSignChange { .. }) if !spec.u.uses(Var::X) => Ok(Regime::Trend),
        Err(Error::NoSignChange { .. }) => Err(Error::Unclassifiable(
            "u depends on x and the canonical system has no rest point".into(),
        )),
        Err(e) => Err(e),
    }
}

/// Bisection on `c(0)` until the bracket is narrower than `tol_c0`.
///
/// Runs are classified HIGH or LOW as they unfold (see [`Classification`]).
/// The divergent mode amplifies round-off in `c(0)` without bound, so the
/// returned trajectory is integrated in windows over which that mode grows
/// by at most `e^10`; at each window start `c` is shot again from the
/// current state.
pub fn shoot(spec: &ProblemSpec, config: &ShootingConfig) -> Result<ShootingResult> {
    let regime = regime_for(spec)?;
    let horizon = config
        .horizon
        .unwrap_or_else(|| default_horizon(spec.theta, config.tol_tvc));
    if !(horizon > 0.0) || config.n_report < 3 {
        return Err(Error::InvalidArgument(
            "horizon must be positive and n_report >= 3".into(),
        ));
    }
    let shooter = Shooter {
        spec,
        regime,
        end: spec.t0 + horizon,
        horizon,
        tol: config.integ_tol,
    };
    let f0 = spec.f_at(spec.x0, spec.t0, Order::First)?.value;
    let bracket = match config.bracket {
        Some(b) => b,
        None if f0 > 0.0 => (1e-6 * f0, 2.0 * f0),
        None => return Err(Error::InvalidArgument(format!("f(x0, t0) = {f0} must be positive"))),
    };
    let mut log = Vec::new();
    let (c0, bracket_width, iterations) =
        shooter.bisect(spec.t0, spec.x0, bracket, config.bracket.is_none(), config, &mut log)?;

    let grid = linspace(spec.t0, spec.t0 + horizon, config.n_report);
    let dt = grid[1] - grid[0];
    let stride = ((shooter.window() / dt).floor() as usize).max(1);
    let mut tr = Trajectory::constant(vec![grid[0]], spec.x0, c0);
    let mut reshoot_times = Vec::new();
    let mut max_reshoot_jump: f64 = 0.0;
    let mut k = 0;
    let mut c_start = c0;
    loop {
        let k_end = (k + stride).min(grid.len() - 1);
        let x_start = tr.x[k];
        let run = run_system(spec, [x_start, c_start], &grid[k..=k_end], config.integ_tol, |_, _| {
            false
        })?;
        let seg = trajectory_from_run(run);
        tr.t.extend_from_slice(&seg.t[1..]);
        tr.x.extend_from_slice(&seg.x[1..]);
        tr.c.extend_from_slice(&seg.c[1..]);
        tr.steps_accepted += seg.steps_accepted;
        tr.steps_rejected += seg.steps_rejected;
        if seg.event.is_some() {
            tr.event = seg.event;
            break;
        }
        k = k_end;
        if k == grid.len() - 1 {
            break;
        }
        let c_old = tr.c[k];
        let half = 1e-6 * c_old;
        let (c_new, _, _) = shooter.bisect(grid[k], tr.x[k], (c_old - half, c_old + half), true, config, &mut log)?;
        max_reshoot_jump = max_reshoot_jump.max((c_new - c_old).abs() / c_old);
        reshoot_times.push(grid[k]);
        tr.c[k] = c_new;
        c_start = c_new;
    }

    let n = tr.len();
    let path = tr.to_path()?;
    let multiplier = multiplier_from_path(spec, &path)?;
    let (t_end, x_end, c_end) = (tr.t[n - 1], tr.x[n - 1], tr.c[n - 1]);
    let u_c = spec.u_at(c_end, x_end, Order::First)?.first(Var::C);
    let tvc_proxy_at_t = spec.discount(t_end) * u_c * x_end;
    let reached = tr.event.is_none();
    let steady_state = match shooter.regime {
        Regime::Saddle { ss, .. } => Some(ss),
        Regime::Trend => None,
    };
    Ok(ShootingResult {
        c0,
        horizon,
        trajectory: tr,
        multiplier,
        tvc_proxy_at_t,
        bracket_width,
        iterations,
        steady_state,
        reshoot_times,
        max_reshoot_jump,
        classification_log: log,
        verified: reached && bracket_width <= config.tol_c0 && tvc_proxy_at_t <= config.tol_tvc,
    })
}

/// Integrates the time-reversed canonical system from `x* - eps v_s` for
/// `t_back` time units and returns it in forward time (`t` from `0` to the
/// run length). Runs stop early at the usual events.
pub fn saddle_path_backward(
    spec: &ProblemSpec,
    ss: &SteadyState,
    lin: &LinearizationReport,
    eps: f64,
    t_back: f64,
    n_report: usize,
    tol: f64,
) -> Result<Trajectory> {
    if !lin.saddle {
        return Err(Error::NotSaddle);
    }
    if !(t_back > 0.0) || n_report < 2 {
        return Err(Error::InvalidArgument(
            "t_back must be positive and n_report >= 2".into(),
        ));
    }
    let phase = phase_problem(spec)?;
    if eps == 0.0 {
        return Ok(Trajectory::constant(
            linspace(0.0, t_back, n_report),
            ss.x_star,
            ss.c_star,
        ));
    }
    let v = lin.stable_eigvec.unwrap();
    let start = [ss.x_star - eps * v[0], ss.c_star - eps * v[1]];
    let grid = linspace(0.0, -t_back, n_report);
    let run = run_system(&phase, start, &grid, tol, |_, _| false)?;
    let mut tr = trajectory_from_run(run);
    let t_len = -*tr.t.last().unwrap();
    tr.t.reverse();
    tr.x.reverse();
    tr.c.reverse();
    for t in tr.t.iter_mut() {
        *t += t_len;
    }
    if let Some(ev) = tr.event.as_mut() {
        ev.t = 0.0;
    }
    Ok(tr)
}

/// Consumption on the stable arm at `x0`, by backward integration from the
/// rest point on the branch that contains `x0`.
pub fn implied_c(spec: &ProblemSpec, x0: f64, tol: f64) -> Result<(f64, Trajectory)> {
    let phase = phase_problem(spec)?;
    let ss = find_steady_state(&phase, None)?;
    let lin = linearize(&phase, &ss)?;
    let (mu_s, _) = lin.saddle_rates().ok_or(Error::NotSaddle)?;
    if x0 == ss.x_star {
        return Ok((ss.c_star, Trajectory::constant(vec![0.0, 1.0], ss.x_star, ss.c_star)));
    }
    let eps_abs = 1e-6 * ss.x_star;
    let eps = if x0 < ss.x_star { eps_abs } else { -eps_abs };
    let gap = (x0 - ss.x_star).abs() / eps_abs;
    let t_back = 1.5 * gap.ln() / mu_s.abs() + 10.0;
    let n = (t_back / 0.05).ceil() as usize + 1;
    let tr = saddle_path_backward(&phase, &ss, &lin, eps, t_back, n, tol)?;
    // in forward time x runs from far away towards x*
    for k in 0..tr.len() - 1 {
        let (xa, xb) = (tr.x[k], tr.x[k + 1]);
        if (xa - x0) * (xb - x0) <= 0.0 && xa != xb {
            let w = (x0 - xa) / (xb - xa);
            return Ok((tr.c[k] + w * (tr.c[k + 1] - tr.c[k]), tr));
        }
    }
    Err(Error::InvalidArgument(format!(
        "x0 = {x0} is not reached by the stable arm within t = {t_back}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::feasibility_check;

    fn example1() -> ProblemSpec {
        ProblemSpec::linear_wealth(0.03, "ln(c)", "0.05", "0.2", 1.0).unwrap()
    }

    fn ramsey(x0: f64) -> ProblemSpec {
        ProblemSpec::growth(0.03, "ln(c)", "x^0.3", x0).unwrap()
    }

    #[test]
    fn horizon_default() {
        assert_eq!(default_horizon(0.5, 1.0), 50.0);
        let t = default_horizon(0.03, 1e-6);
        assert!((-0.03 * t).exp() / 0.03 <= 1e-7 * (1.0 + 1e-12));
        assert!(t > 10.0 / 0.03);
    }

    #[test]
    fn fast_growing_wealth_is_not_mistaken_for_oversaving() {
        // R > 2θ: discounted wealth rises even on the optimal path, and
        // x(T) is far above 1e12
        for r in [0.08, 0.2] {
            let spec = ProblemSpec::linear_wealth(0.03, "ln(c)", &r.to_string(), "0.2", 1.0).unwrap();
            let res = shoot(&spec, &ShootingConfig::default()).unwrap();
            let exact = 0.03 * (1.0 + 0.2 / r);
            assert!(
                (res.c0 - exact).abs() <= 1e-12 * exact,
                "R = {r}: {} vs {exact}",
                res.c0
            );
            assert!(res.verified, "R = {r}");
        }
    }

    #[test]
    fn example1_initial_consumption() {
        let res = shoot(&example1(), &ShootingConfig::default()).unwrap();
        assert!((res.c0 - 0.15).abs() <= 1e-4 * 0.15, "{}", res.c0);
        assert!(res.bracket_width <= 1e-10);
        assert!(res.verified, "{}", res.tvc_proxy_at_t);
        assert!(res.steady_state.is_none());
        let path = res.trajectory.to_path().unwrap();
        let f = feasibility_check(&path, &example1(), 1e-6);
        assert!(f.pass, "{f:?}");
    }

    #[test]
    fn classification_is_monotone_in_c0() {
        let spec = example1();
        let shooter = Shooter {
            spec: &spec,
            regime: regime_for(&spec).unwrap(),
            end: 600.0,
            horizon: 600.0,
            tol: 1e-10,
        };
        for c0 in [0.05, 0.1, 0.14, 0.149, 0.1499, 0.15 - 1e-9] {
            assert_eq!(
                shooter.classify(0.0, 1.0, c0).unwrap().class,
                Classification::Low,
                "{c0}"
            );
        }
        for c0 in [0.15 + 1e-9, 0.1501, 0.151, 0.16, 0.2, 0.4] {
            assert_eq!(
                shooter.classify(0.0, 1.0, c0).unwrap().class,
                Classification::High,
                "{c0}"
            );
        }
    }

    #[test]
    fn ramsey_converges_to_steady_state() {
        let ss = find_steady_state(&ramsey(1.0), None).unwrap();
        let spec = ramsey(0.5 * ss.x_star);
        let cfg = ShootingConfig {
            horizon: Some(600.0),
            ..ShootingConfig::default()
        };
        let res = shoot(&spec, &cfg).unwrap();
        assert!(!res.reshoot_times.is_empty());
        assert!(res.max_reshoot_jump < 1e-9, "{}", res.max_reshoot_jump);
        let x = &res.trajectory.x;
        assert!(x.windows(2).all(|w| w[1] >= w[0] - 1e-12), "monotone approach");
        assert!((x.last().unwrap() - ss.x_star).abs() < 1e-6 * ss.x_star);
        assert!(res.tvc_proxy_at_t < 1e-6);
        assert!(res.verified);
        assert_eq!(res.trajectory.len(), cfg.n_report);
        let path = res.trajectory.to_path().unwrap();
        let f = feasibility_check(&path, &spec, 1e-6);
        assert!(f.pass, "{f:?}");
    }

    #[test]
    fn equilibrium_shooting() {
        let ss = find_steady_state(&ramsey(1.0), None).unwrap();
        let res = shoot(&ramsey(ss.x_star), &ShootingConfig::default()).unwrap();
        assert!((res.c0 - ss.c_star).abs() <= 1e-10, "{} vs {}", res.c0, ss.c_star);
    }

    #[test]
    fn start_above_steady_state() {
        let ss = find_steady_state(&ramsey(1.0), None).unwrap();
        let spec = ramsey(2.0 * ss.x_star);
        let res = shoot(&spec, &ShootingConfig::default()).unwrap();
        let (c_back, _) = implied_c(&spec, spec.x0, 1e-10).unwrap();
        assert!((res.c0 - c_back).abs() <= 1e-3 * c_back);
        assert!(res.trajectory.x.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn backward_arm_matches_shooting() {
        let ss = find_steady_state(&ramsey(1.0), None).unwrap();
        let spec = ramsey(0.5 * ss.x_star);
        let res = shoot(&spec, &ShootingConfig::default()).unwrap();
        let (c_back, tr) = implied_c(&spec, spec.x0, 1e-10).unwrap();
        assert!((res.c0 - c_back).abs() <= 1e-3 * c_back, "{} vs {c_back}", res.c0);
        assert!(tr.x[0] < spec.x0);
    }

    #[test]
    fn backward_arm_degenerate_and_wrong_side() {
        let spec = ramsey(1.0);
        let ss = find_steady_state(&spec, None).unwrap();
        let lin = linearize(&spec, &ss).unwrap();
        let flat = saddle_path_backward(&spec, &ss, &lin, 0.0, 100.0, 11, 1e-10).unwrap();
        assert!(flat.x.iter().all(|x| *x == ss.x_star));
        let up = saddle_path_backward(&spec, &ss, &lin, -1e-4, 100.0, 101, 1e-10).unwrap();
        assert!(up.x[0] > ss.x_star, "negative eps leaves on the upper branch");
        let down = saddle_path_backward(&spec, &ss, &lin, 1e-4, 100.0, 101, 1e-10).unwrap();
        assert!(down.x[0] < ss.x_star);
        let not_saddle = LinearizationReport::from_jacobian([[0.0, -1.0], [0.0, 0.0]]);
        assert_eq!(
            saddle_path_backward(&spec, &ss, &not_saddle, 1e-4, 10.0, 11, 1e-10).unwrap_err(),
            Error::NotSaddle
        );
    }

    #[test]
    fn wealth_in_utility_without_rest_point_is_unclassifiable() {
        let spec = ProblemSpec::linear_wealth(0.03, "ln(c) + ln(x)", "0.05", "0.2", 1.0).unwrap();
        assert!(matches!(
            shoot(&spec, &ShootingConfig::default()),
            Err(Error::Unclassifiable(_))
        ));
    }
}
