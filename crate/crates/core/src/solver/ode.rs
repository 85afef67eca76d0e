//! Dormand–Prince 5(4) with dense output for two-dimensional systems.

use crate::{Error, Result};

pub(crate) type State = [f64; 2];

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub t0: f64,
    pub h: f64,
    pub y0: State,
    pub y1: State,
    rcont: [State; 5],
}

impl Step {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> State {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = &self.rcont;
        let mut y = [0.0; 2];
        for i in 0..2 {
            y[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        }
        y
    }
}

pub(crate) enum Flow {
    Continue,
    /// Stop at the given time inside the step just taken.
    Stop(f64),
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `y' = rhs(t, y)` from `t0` towards `t1` (either direction).
///
/// `on_step` sees every accepted step and may stop the integration. A
/// right-hand side error inside a step is treated as a rejection; if the
/// step size then underflows, `on_failure` decides whether the integration
/// ends quietly (returning `true`) or fails with the underlying error.
pub(crate) fn integrate<R, S, F>(
    mut rhs: R,
    t0: f64,
    y0: State,
    t1: f64,
    opts: &Options,
    mut on_step: S,
    mut on_failure: F,
) -> Result<(f64, Stats)>
where
    R: FnMut(f64, State) -> Result<State>,
    S: FnMut(&Step) -> Flow,
    F: FnMut(f64, State) -> bool,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut stats = Stats::default();
    if span == 0.0 {
        return Ok((t0, stats));
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, y)?;
    let mut h = initial_step(&k1, &y, opts).min(span);
    let h_min = 1e-13 * (t0.abs().max(t1.abs()).max(1.0));
    let mut last_err: Option<Error> = None;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { t });
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;
        match try_step(&mut rhs, t, &y, &k1, hs) {
            Ok((y1, k7, err_vec, ks)) => {
                let err = error_norm(&err_vec, &y, &y1, opts);
                if err <= 1.0 {
                    let step = dense(t, hs, &y, &y1, &k1, &k7, &ks);
                    stats.accepted += 1;
                    t = if last { t1 } else { t + hs };
                    y = y1;
                    k1 = k7;
                    if let Flow::Stop(ts) = on_step(&step) {
                        return Ok((ts, stats));
                    }
                    if last {
                        return Ok((t, stats));
                    }
                    let fac = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h *= fac;
                    last_err = None;
                } else {
                    stats.rejected += 1;
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
            }
            Err(e) => {
                stats.rejected += 1;
                h *= 0.25;
                last_err = Some(e);
            }
        }
        if h < h_min {
            if on_failure(t, y) {
                return Ok((t, stats));
            }
            return Err(last_err.unwrap_or(Error::StepSizeUnderflow { t }));
        }
    }
}

fn initial_step(k1: &State, y: &State, opts: &Options) -> f64 {
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = ((y[0] / scale(0)).powi(2) + (y[1] / scale(1)).powi(2)).sqrt();
    let d1 = ((k1[0] / scale(0)).powi(2) + (k1[1] / scale(1)).powi(2)).sqrt();
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-4
    } else {
        (0.01 * d0 / d1).clamp(1e-8, 1.0)
    }
}

fn axpy(y: &State, h: f64, ks: &[State], coeffs: &[f64]) -> State {
    let mut out = *y;
    for (k, a) in ks.iter().zip(coeffs) {
        if *a != 0.0 {
            out[0] += h * a * k[0];
            out[1] += h * a * k[1];
        }
    }
    out
}

/// Runs the seven stages. Returns `(y1, k7, error estimate, stages 1..6)`.
fn try_step<R>(rhs: &mut R, t: f64, y: &State, k1: &State, h: f64) -> Result<(State, State, State, [State; 6])>
where
    R: FnMut(f64, State) -> Result<State>,
{
    let ks = stages(rhs, t, y, k1, h)?;
    let y1 = axpy(y, h, &ks[..6], &A[6]);
    if !(y1[0].is_finite() && y1[1].is_finite()) {
        return Err(Error::StepSizeUnderflow { t });
    }
    let k7 = rhs(t + h, y1)?;
    let mut all = ks.to_vec();
    all.push(k7);
    let err = axpy(&[0.0, 0.0], h, &all, &E);
    Ok((y1, k7, err, ks))
}

fn stages<R>(rhs: &mut R, t: f64, y: &State, k1: &State, h: f64) -> Result<[State; 6]>
where
    R: FnMut(f64, State) -> Result<State>,
{
    let mut ks = [[0.0; 2]; 6];
    ks[0] = *k1;
    for s in 1..6 {
        let ys = axpy(y, h, &ks[..s], &A[s][..s]);
        ks[s] = rhs(t + C[s] * h, ys)?;
    }
    Ok(ks)
}

fn error_norm(err: &State, y0: &State, y1: &State, opts: &Options) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / 2.0).sqrt()
}

fn dense(t: f64, h: f64, y0: &State, y1: &State, k1: &State, k7: &State, ks: &[State; 6]) -> Step {
    let mut all = ks.to_vec();
    all.push(*k7);
    let mut rcont = [[0.0; 2]; 5];
    for i in 0..2 {
        let ydiff = y1[i] - y0[i];
        let bspl = h * k1[i] - ydiff;
        rcont[0][i] = y0[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - h * k7[i] - bspl;
        rcont[4][i] = h * all.iter().zip(D).map(|(k, d)| d * k[i]).sum::<f64>();
    }
    Step {
        t0: t,
        h,
        y0: *y0,
        y1: *y1,
        rcont,
    }
}

/// First time in `step` at which `g` changes from positive to non-positive,
/// located by bisection on the dense output.
pub(crate) fn locate_crossing(step: &Step, g: impl Fn(f64, &State) -> f64) -> Option<f64> {
    let (ta, tb) = (step.t0, step.t1());
    if g(ta, &step.y0) <= 0.0 {
        return Some(ta);
    }
    if g(tb, &step.y1) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (ta, tb);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid, &step.eval(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(tol: f64) -> Options {
        Options {
            rtol: tol,
            atol: tol,
            max_steps: 1_000_000,
        }
    }

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let mut samples = Vec::new();
        let (tend, _) = integrate(
            |_, y| Ok([y[1], -y[0]]),
            0.0,
            [0.0, 1.0],
            10.0,
            &opts(1e-10),
            |s| {
                let tm = 0.5 * (s.t0 + s.t1());
                samples.push((tm, s.eval(tm)));
                Flow::Continue
            },
            |_, _| false,
        )
        .unwrap();
        assert_eq!(tend, 10.0);
        for (t, y) in samples {
            assert!((y[0] - t.sin()).abs() < 1e-8, "{t}: {}", y[0]);
            assert!((y[1] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_direction() {
        let mut last = [0.0; 2];
        integrate(
            |_, y| Ok([y[0], 0.0]),
            1.0,
            [1.0, 0.0],
            0.0,
            &opts(1e-12),
            |s| {
                last = s.y1;
                Flow::Continue
            },
            |_, _| false,
        )
        .unwrap();
        assert!((last[0] - (-1.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn error_shrinks_with_tolerance() {
        let run = |tol: f64| {
            let mut end = [0.0; 2];
            integrate(
                |_, y| Ok([-y[1], y[0]]),
                0.0,
                [1.0, 0.0],
                20.0,
                &opts(tol),
                |s| {
                    end = s.y1;
                    Flow::Continue
                },
                |_, _| false,
            )
            .unwrap();
            (end[0] - 20f64.cos()).abs()
        };
        let (e1, e2) = (run(1e-6), run(1e-9));
        assert!(e2 < e1 / 100.0, "{e1} {e2}");
    }

    #[test]
    fn crossing_location() {
        let mut hit = None;
        integrate(
            |_, _| Ok([-1.0, 0.0]),
            0.0,
            [1.0, 0.0],
            5.0,
            &opts(1e-10),
            |s| match locate_crossing(s, |_, y| y[0]) {
                Some(tc) => {
                    hit = Some(tc);
                    Flow::Stop(tc)
                }
                None => Flow::Continue,
            },
            |_, _| false,
        )
        .unwrap();
        assert!((hit.unwrap() - 1.0).abs() < 1e-12);
    }
}
