//! Candidate optimal trajectories.
//!
//! The canonical system integrated here is `ẋ = f(x, t) - c` together with
//! the Euler equation for `ċ` (see [`crate::hamiltonian::euler_rhs`]).

mod ode;
mod shoot;
mod steady;

use serde::Serialize;

use crate::hamiltonian::euler_rhs;
use crate::numeric::linspace;
use crate::problem::{AdmissiblePath, ProblemSpec};
use crate::{Error, Result};

pub use shoot::{
    default_horizon, implied_c, saddle_path_backward, shoot, Classification, ClassificationEntry, ShootingConfig,
    ShootingResult,
};
pub use steady::{find_steady_state, linearize, Eigenvalues, LinearizationReport, SteadyState};

pub const OVERFLOW_GUARD: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The state reached zero.
    StateZero,
    /// Consumption reached zero.
    ControlZero,
    /// `|x|` or `|c|` reached the overflow guard.
    Overflow,
    /// A caller-supplied stop condition fired.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
}

impl std::fmt::Display for Event {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.kind {
            EventKind::StateZero => "x crossed 0",
            EventKind::ControlZero => "c crossed 0",
            EventKind::Overflow => "overflow guard reached",
            EventKind::Stopped => "stopped",
        };
        write!(f, "{what} at t = {}", self.t)
    }
}

/// Integrated `(x, c)` samples on a reporting grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub event: Option<Event>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_path(&self) -> Result<AdmissiblePath> {
        AdmissiblePath::new(self.t.clone(), self.x.clone(), self.c.clone())
    }

    fn constant(t: Vec<f64>, x: f64, c: f64) -> Self {
        let n = t.len();
        Self {
            t,
            x: vec![x; n],
            c: vec![c; n],
            event: None,
            steps_accepted: 0,
            steps_rejected: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrateOptions {
    /// Per-step relative tolerance (absolute tolerance is `tol * 1e-3`).
    pub tol: f64,
    /// Number of points of the uniform reporting grid.
    pub n_report: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            n_report: 1001,
        }
    }
}

/// Outcome of a raw integration on an arbitrary output grid.
struct Run {
    samples: Vec<(f64, [f64; 2])>,
    event: Option<Event>,
    accepted: usize,
    rejected: usize,
}

/// Integrates the canonical system from `(t0, y0)` over `grid` (monotone,
/// starting at `t0`, forward or backward). `stop` is polled after every step
/// with the step's end point; returning `true` ends the run there.
fn run_system(
    spec: &ProblemSpec,
    y0: [f64; 2],
    grid: &[f64],
    tol: f64,
    mut stop: impl FnMut(f64, [f64; 2]) -> bool,
) -> Result<Run> {
    let t0 = grid[0];
    let t1 = *grid.last().unwrap();
    let forward = t1 >= t0;
    let opts = ode::Options {
        rtol: tol,
        atol: tol * 1e-3,
        max_steps: 2_000_000,
    };
    let mut samples = vec![(t0, y0)];
    let mut next = 1;
    let mut event: Option<Event> = None;
    let rhs = |t: f64, y: [f64; 2]| -> Result<[f64; 2]> {
        let (xd, cd) = euler_rhs(spec, y[0], y[1], t)?;
        Ok([xd, cd])
    };
    let on_step = |step: &ode::Step| -> ode::Flow {
        let mut cut: Option<(f64, EventKind)> = None;
        let checks: [(EventKind, &dyn Fn(f64, &[f64; 2]) -> f64); 3] = [
            (EventKind::StateZero, &|_, y| if spec.state_nonneg { y[0] } else { 1.0 }),
            (EventKind::ControlZero, &|_, y| y[1]),
            (EventKind::Overflow, &|_, y| OVERFLOW_GUARD - y[0].abs().max(y[1].abs())),
        ];
        for (kind, g) in checks {
            if let Some(tc) = ode::locate_crossing(step, g) {
                let earlier = cut.is_none_or(|(tp, _)| if forward { tc < tp } else { tc > tp });
                if earlier {
                    cut = Some((tc, kind));
                }
            }
        }
        if cut.is_none() && stop(step.t1(), step.y1) {
            cut = Some((step.t1(), EventKind::Stopped));
        }
        let end = cut.map_or(step.t1(), |(tc, _)| tc);
        let within = |tg: f64| if forward { tg <= end } else { tg >= end };
        while next < grid.len() && within(grid[next]) {
            let tg = grid[next];
            let y = if tg == step.t1() { step.y1 } else { step.eval(tg) };
            samples.push((tg, y));
            next += 1;
        }
        match cut {
            Some((tc, kind)) => {
                if samples.last().is_none_or(|s| s.0 != tc) {
                    samples.push((tc, step.eval(tc)));
                }
                event = Some(Event { kind, t: tc });
                ode::Flow::Stop(tc)
            }
            None => ode::Flow::Continue,
        }
    };
    // A right-hand side that cannot be evaluated next to x = 0 (e.g. x^a)
    // is the state constraint binding.
    let mut boundary: Option<f64> = None;
    let on_failure = |t: f64, y: [f64; 2]| {
        let near_zero = spec.state_nonneg && y[0].abs() <= 1e-6 * (1.0 + y0[0].abs());
        if near_zero {
            boundary = Some(t);
        }
        near_zero
    };
    let (_, stats) = ode::integrate(rhs, t0, y0, t1, &opts, on_step, on_failure)?;
    if let Some(t) = boundary {
        event = Some(Event {
            kind: EventKind::StateZero,
            t,
        });
    }
    Ok(Run {
        samples,
        event,
        accepted: stats.accepted,
        rejected: stats.rejected,
    })
}

fn trajectory_from_run(run: Run) -> Trajectory {
    let (mut t, mut x, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for (ts, y) in run.samples {
        t.push(ts);
        x.push(y[0]);
        c.push(y[1]);
    }
    Trajectory {
        t,
        x,
        c,
        event: run.event,
        steps_accepted: run.accepted,
        steps_rejected: run.rejected,
    }
}

/// Integrates the canonical system from `(x0, c0)` at `t_span.0` to
/// `t_span.1`, sampled on a uniform grid of `opts.n_report` points.
///
/// Integration halts early when `x <= 0` (with the state constraint on),
/// `c <= 0`, or either value reaches [`OVERFLOW_GUARD`]; the event time is
/// appended as the last sample.
pub fn integrate(
    spec: &ProblemSpec,
    x0: f64,
    c0: f64,
    t_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(c0 > 0.0) || !x0.is_finite() || (spec.state_nonneg && x0 < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial point (x0 = {x0}, c0 = {c0}) is not interior"
        )));
    }
    if !(t_span.1 > t_span.0) || opts.n_report < 2 || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("need t1 > t0, n_report >= 2 and tol > 0".into()));
    }
    let grid = linspace(t_span.0, t_span.1, opts.n_report);
    let run = run_system(spec, [x0, c0], &grid, opts.tol, |_, _| false)?;
    Ok(trajectory_from_run(run))
}
