//! Backward-induction benchmark on a truncated, time-discretized problem.
//!
//! Dynamics are Euler-forward, `x_{k+1} = x_k + Δt (f(x_k, t_k) - c_k)`, and
//! the per-step reward is `e^{-θ t_k} u(c_k, x_k) Δt`. The action is the next
//! state: the best grid node is found by a scan, then refined by a golden
//! section search on the two neighbouring cells, with `V_{k+1}` linearly
//! interpolated in `x`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::numeric::{linspace, logspace, trapezoid};
use crate::problem::{AdmissiblePath, ProblemSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "x", rename_all = "snake_case")]
pub enum Terminal {
    Free,
    /// `x(T) >= x_T`, imposed as the exact penalty
    /// `-PIN_PENALTY * max(0, x_T - x)`; with increasing utility it binds.
    Pin(f64),
}

/// Weight of the terminal shortfall below a pin. A hard `-inf` wall would
/// stall the reachable set whenever one step moves `x` less than one cell.
pub const PIN_PENALTY: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedProblem {
    pub dt: f64,
    pub horizon: f64,
    pub n_x: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub terminal: Terminal,
}

impl DiscretizedProblem {
    pub fn new(dt: f64, horizon: f64, n_x: usize, x_min: f64, x_max: f64, terminal: Terminal) -> Result<Self> {
        if !(dt > 0.0 && horizon >= dt) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt <= T, got dt = {dt}, T = {horizon}"
            )));
        }
        if n_x < 16 {
            return Err(Error::InvalidArgument(format!(
                "n_x = {n_x}; at least 16 grid points are needed"
            )));
        }
        if !(x_min > 0.0 && x_max > x_min && x_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "the log-spaced grid needs 0 < x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if let Terminal::Pin(p) = terminal {
            if !(p >= x_min && p <= x_max) {
                return Err(Error::InvalidArgument(format!("pin {p} outside [{x_min}, {x_max}]")));
            }
        }
        Ok(Self {
            dt,
            horizon,
            n_x,
            x_min,
            x_max,
            terminal,
        })
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    /// Tolerance for the scaled budget residual of a rollout: the
    /// Euler scheme is only consistent to `O(Δt)`.
    pub fn path_tolerance(&self) -> f64 {
        self.dt
    }

    /// Log-spaced grid with `x0` and the pin moved onto their nearest nodes.
    pub fn state_grid(&self, x0: f64) -> Vec<f64> {
        let mut grid = logspace(self.x_min, self.x_max, self.n_x);
        let mut snap = |v: f64, keep: Option<usize>| -> usize {
            let j = grid.partition_point(|g| *g < v);
            let cand = [j.saturating_sub(1), j.min(self.n_x - 1)];
            let mut best = cand[0];
            for c in cand {
                if Some(c) != keep && ((grid[c] - v).abs() < (grid[best] - v).abs() || Some(best) == keep) {
                    best = c;
                }
            }
            grid[best] = v;
            best
        };
        let mut kept = None;
        if x0 >= self.x_min && x0 <= self.x_max {
            kept = Some(snap(x0, None));
        }
        if let Terminal::Pin(p) = self.terminal {
            snap(p, kept);
        }
        grid
    }
}

/// Greedy rollout samples; `c` at the last node repeats the last action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    /// `Σ e^{-θ t_k} u(c_k, x_k) Δt` over the `N` decision steps.
    pub objective: f64,
    /// `max(0, x_T - x(T))` for a pinned terminal, else 0.
    pub pin_shortfall: f64,
}

impl Rollout {
    pub fn to_path(&self) -> Result<AdmissiblePath> {
        AdmissiblePath::new(self.t.clone(), self.x.clone(), self.c.clone())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSolution {
    pub problem: DiscretizedProblem,
    #[serde(skip)]
    spec: ProblemSpec,
    #[serde(skip)]
    pub t: Vec<f64>,
    #[serde(skip)]
    pub x: Vec<f64>,
    /// `value[k][i]`, `k = 0..=N`, including any pin penalty; `-inf` marks
    /// nodes with no feasible action.
    #[serde(skip)]
    pub value: Vec<Vec<f64>>,
    /// Consumption chosen at `(t_k, x_i)`, `k < N`; NaN where infeasible.
    #[serde(skip)]
    pub policy: Vec<Vec<f64>>,
    pub infeasible_nodes: usize,
    pub value_at_x0: f64,
    pub greedy: Rollout,
}

/// `V` interpolated linearly between grid nodes; a `-inf` neighbour makes
/// every off-node point of its cell `-inf`.
fn interp_value(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x < xs[0] || x > xs[n - 1] {
        return f64::NEG_INFINITY;
    }
    let j = xs.partition_point(|g| *g <= x);
    if j == 0 {
        return v[0];
    }
    if xs[j - 1] == x || j == n {
        return v[j - 1];
    }
    let (a, b) = (v[j - 1], v[j]);
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    a + w * (b - a)
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Best next state from `x` with output `fx`, given the reward of each grid
/// node `reward(j)` (already weighted, `-inf` when infeasible) and the
/// weighted reward of a continuous choice `reward_at(x')`.
fn best_action(
    xs: &[f64],
    vnext: &[f64],
    x: f64,
    fx: f64,
    dt: f64,
    reward: impl Fn(usize) -> f64,
    reward_at: impl Fn(f64) -> f64,
) -> Option<(f64, f64)> {
    let top = x + dt * fx;
    let hi_idx = xs.partition_point(|g| *g <= top);
    let mut best: Option<(usize, f64)> = None;
    for j in 0..hi_idx {
        let val = reward(j) + vnext[j];
        if val > best.map_or(f64::NEG_INFINITY, |b| b.1) {
            best = Some((j, val));
        }
    }
    let (j, mut val) = best?;
    let mut arg = xs[j];
    let lo = xs[j.saturating_sub(1)];
    let hi = xs[(j + 1).min(xs.len() - 1)].min(top);
    let g = |y: f64| reward_at(y) + interp_value(xs, vnext, y);
    for (a, b) in [(lo, xs[j]), (xs[j], hi)] {
        if b > a {
            let (y, gy) = golden_max(&g, a, b);
            if gy > val {
                arg = y;
                val = gy;
            }
        }
    }
    Some((arg, val))
}

fn golden_max(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - R * (b - a);
    let mut x2 = a + R * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    for _ in 0..60 {
        if b - a <= 1e-12 * (1.0 + a.abs()) {
            break;
        }
        if g1 < g2 {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + R * (b - a);
            g2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - R * (b - a);
            g1 = g(x1);
        }
    }
    if g1 >= g2 {
        (x1, g1)
    } else {
        (x2, g2)
    }
}

fn utility(spec: &ProblemSpec, c: f64, x: f64) -> f64 {
    if c < 0.0 {
        return f64::NEG_INFINITY;
    }
    finite_or_neg_inf(spec.u.value(c, x, 0.0))
}

/// Solves the discretized problem for `spec` and rolls out the greedy path
/// from `spec.x0`.
pub fn backward_induction(spec: &ProblemSpec, d: &DiscretizedProblem) -> Result<OracleSolution> {
    let x0 = spec.x0;
    if !(x0 >= d.x_min && x0 <= d.x_max) {
        return Err(Error::InvalidArgument(format!(
            "x0 = {x0} outside the grid [{}, {}]",
            d.x_min, d.x_max
        )));
    }
    let n = d.steps();
    let dt = d.dt;
    let xs = d.state_grid(x0);
    let ts: Vec<f64> = (0..=n).map(|k| spec.t0 + k as f64 * dt).collect();
    let nx = xs.len();

    let mut value = vec![vec![0.0; nx]; n + 1];
    if let Terminal::Pin(p) = d.terminal {
        for (v, x) in value[n].iter_mut().zip(&xs) {
            *v = -PIN_PENALTY * (p - x).max(0.0);
        }
    }
    let mut policy = vec![vec![f64::NAN; nx]; n];

    let f_row = |t: f64| -> Vec<f64> { xs.iter().map(|x| finite_or_neg_inf(spec.f.value(0.0, *x, t))).collect() };
    // autonomous f: rewards on grid pairs do not depend on k
    let table: Option<Vec<Vec<f64>>> = spec.is_autonomous().then(|| {
        let fs = f_row(spec.t0);
        (0..nx)
            .into_par_iter()
            .map(|i| {
                (0..nx)
                    .map(|j| utility(spec, fs[i] - (xs[j] - xs[i]) / dt, xs[i]))
                    .collect()
            })
            .collect()
    });
    let mut infeasible = 0;
    for k in (0..n).rev() {
        let t = ts[k];
        let w = spec.discount(t) * dt;
        let fs = f_row(t);
        let vnext = &value[k + 1];
        let results: Vec<Option<(f64, f64)>> = (0..nx)
            .into_par_iter()
            .map(|i| {
                let xi = xs[i];
                if !fs[i].is_finite() {
                    return None;
                }
                let reward_at = |y: f64| w * utility(spec, fs[i] - (y - xi) / dt, xi);
                match &table {
                    Some(tab) => best_action(&xs, vnext, xi, fs[i], dt, |j| w * tab[i][j], reward_at),
                    None => best_action(&xs, vnext, xi, fs[i], dt, |j| reward_at(xs[j]), reward_at),
                }
                .filter(|(_, v)| *v > f64::NEG_INFINITY)
            })
            .collect();
        let (vk, pk) = (&mut value[k], &mut policy[k]);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Some((y, v)) => {
                    vk[i] = v;
                    pk[i] = fs[i] - (y - xs[i]) / dt;
                }
                None => {
                    vk[i] = f64::NEG_INFINITY;
                    infeasible += 1;
                }
            }
        }
    }
    let mut sol = OracleSolution {
        problem: d.clone(),
        spec: spec.clone(),
        value_at_x0: interp_value(&xs, &value[0], x0),
        t: ts,
        x: xs,
        value,
        policy,
        infeasible_nodes: infeasible,
        greedy: Rollout {
            t: Vec::new(),
            x: Vec::new(),
            c: Vec::new(),
            objective: f64::NAN,
            pin_shortfall: 0.0,
        },
    };
    sol.greedy = rollout(&sol, x0)?;
    Ok(sol)
}

fn rollout(sol: &OracleSolution, x0: f64) -> Result<Rollout> {
    let xs = &sol.x;
    if !(x0 >= xs[0] && x0 <= xs[xs.len() - 1]) {
        return Err(Error::InvalidArgument(format!(
            "x0 = {x0} outside the grid [{}, {}]",
            xs[0],
            xs[xs.len() - 1]
        )));
    }
    let spec = &sol.spec;
    let dt = sol.problem.dt;
    let n = sol.t.len() - 1;
    let (mut x, mut c) = (vec![x0], Vec::with_capacity(n + 1));
    let mut objective = 0.0;
    for k in 0..n {
        let t = sol.t[k];
        let xk = x[k];
        let w = spec.discount(t) * dt;
        let fx = finite_or_neg_inf(spec.f.value(0.0, xk, t));
        let reward_at = |y: f64| w * utility(spec, fx - (y - xk) / dt, xk);
        let Some((y, _)) = best_action(xs, &sol.value[k + 1], xk, fx, dt, |j| reward_at(xs[j]), reward_at)
            .filter(|(_, v)| *v > f64::NEG_INFINITY)
        else {
            return Err(Error::InvalidArgument(format!(
                "no feasible action at t = {t}, x = {xk}"
            )));
        };
        let ck = fx - (y - xk) / dt;
        objective += w * utility(spec, ck, xk);
        c.push(ck);
        x.push(y);
    }
    c.push(*c.last().unwrap_or(&f64::NAN));
    let pin_shortfall = match sol.problem.terminal {
        Terminal::Pin(p) => (p - x[n]).max(0.0),
        Terminal::Free => 0.0,
    };
    Ok(Rollout {
        t: sol.t.clone(),
        x,
        c,
        objective,
        pin_shortfall,
    })
}

/// Greedy rollout of `sol` from `x0` as an admissible path on the oracle
/// time grid.
pub fn oracle_path(sol: &OracleSolution, x0: f64) -> Result<AdmissiblePath> {
    rollout(sol, x0)?.to_path()
}

impl OracleSolution {
    /// Writes the value and policy tables with header `k,t,x_i,V,c_policy`.
    /// The policy column is empty at `k = N`.
    pub fn write_table_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "k,t,x_i,V,c_policy")?;
        for (k, row) in self.value.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let c = self.policy.get(k).map_or(String::new(), |p| format!("{:.16e}", p[i]));
                writeln!(out, "{k},{:.16e},{:.16e},{:.16e},{c}", self.t[k], self.x[i], v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveComparison {
    pub j_a: f64,
    pub j_b: f64,
    /// `j_a - j_b`.
    pub gap: f64,
    pub horizon: f64,
    pub nodes: usize,
}

/// Truncated discounted objectives of two paths on `[t0, T]`, both resampled
/// by linear interpolation onto a common uniform grid and integrated with
/// the trapezoidal rule.
pub fn compare_objectives(
    spec: &ProblemSpec,
    a: &AdmissiblePath,
    b: &AdmissiblePath,
    horizon: f64,
) -> Result<ObjectiveComparison> {
    let t0 = a.t[0].max(b.t[0]);
    for p in [a, b] {
        if p.t[0] > t0 || p.horizon() < horizon - 1e-9 * horizon.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "path on [{}, {}] does not cover [{t0}, {horizon}]",
                p.t[0],
                p.horizon()
            )));
        }
    }
    if !(horizon > t0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} <= t0 = {t0}")));
    }
    let step = |p: &AdmissiblePath| (p.horizon() - p.t[0]) / (p.len() - 1) as f64;
    let h = step(a).min(step(b));
    let nodes = (((horizon - t0) / h).ceil() as usize + 1).clamp(3, 400_001);
    let grid = linspace(t0, horizon, nodes);
    let objective = |p: &AdmissiblePath| -> Result<f64> {
        let mut y = Vec::with_capacity(nodes);
        for &t in &grid {
            let x = crate::numeric::interp(&p.t, &p.x, t);
            let c = crate::numeric::interp(&p.t, &p.c, t);
            let u = spec.u.eval(&crate::expr::Bindings::cxt(c, x, t))?;
            y.push(spec.discount(t) * u);
        }
        Ok(trapezoid(&grid, &y))
    };
    let (j_a, j_b) = (objective(a)?, objective(b)?);
    Ok(ObjectiveComparison {
        j_a,
        j_b,
        gap: j_a - j_b,
        horizon,
        nodes,
    })
}
