//! Test-side oracles shared by the integration targets.

#![allow(dead_code)]

use octrl_core::expr::{Bindings, Expr, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random expression text over `c, x, t` that stays finite and positive for
/// positive arguments.
pub fn random_positive_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let leaf = |rng: &mut ChaCha8Rng| match rng.gen_range(0..4) {
        0 => "c".to_string(),
        1 => "x".to_string(),
        2 => "t".to_string(),
        _ => format!("{:.3}", rng.gen_range(0.5..2.0)),
    };
    if depth == 0 || rng.gen_bool(0.25) {
        return leaf(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| random_positive_expr(rng, depth - 1);
    match rng.gen_range(0..8) {
        0 => format!("({} + {})", sub(rng), sub(rng)),
        1 => format!("({} * {})", sub(rng), sub(rng)),
        2 => format!("({} / {})", sub(rng), sub(rng)),
        3 => format!("ln(1 + {})", sub(rng)),
        4 => format!("exp(-{})", sub(rng)),
        5 => {
            let p = [-2.0, -1.0, 0.5, 1.5, 2.0, 3.0][rng.gen_range(0..6)];
            format!("{}^{p}", sub(rng))
        }
        6 => format!("pow({}, {:.2})", sub(rng), rng.gen_range(0.2..1.8)),
        _ => format!("({} + {} - {})", sub(rng), sub(rng), leaf(rng).replace('t', "0.1")),
    }
}

fn eval(e: &Expr, p: [f64; 3]) -> f64 {
    e.eval(&Bindings::cxt(p[0], p[1], p[2])).unwrap_or(f64::NAN)
}

fn bump(p: [f64; 3], i: usize, h: f64) -> [f64; 3] {
    let mut q = p;
    q[i] += h;
    q
}

/// Ridders' extrapolation of a difference quotient `d(h)` whose error is a
/// series in `h^2`, started from a few initial steps (a nearby singularity
/// spoils large ones). Returns the estimate with the smallest error estimate.
fn ridders(d: impl Fn(f64) -> f64, h0: f64) -> f64 {
    [h0, 0.1 * h0, 0.01 * h0, 1e-3 * h0]
        .into_iter()
        .map(|h| ridders_from(&d, h))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

fn ridders_from(d: &impl Fn(f64) -> f64, h0: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 12;
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    let mut h = h0;
    table[0][0] = d(h);
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..LEVELS {
        h /= SHRINK;
        table[0][i] = d(h);
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// Central first difference, extrapolated.
pub fn fd_first(e: &Expr, p: [f64; 3], var: Var, h: f64) -> f64 {
    let i = var.index();
    ridders(|h| (eval(e, bump(p, i, h)) - eval(e, bump(p, i, -h))) / (2.0 * h), h)
}

/// Central second difference (pure or mixed), extrapolated.
pub fn fd_second(e: &Expr, p: [f64; 3], a: Var, b: Var, h: f64) -> f64 {
    let (i, j) = (a.index(), b.index());
    ridders(
        |h| {
            if i == j {
                (eval(e, bump(p, i, h)) - 2.0 * eval(e, p) + eval(e, bump(p, i, -h))) / (h * h)
            } else {
                let pp = eval(e, bump(bump(p, i, h), j, h));
                let pm = eval(e, bump(bump(p, i, h), j, -h));
                let mp = eval(e, bump(bump(p, i, -h), j, h));
                let mm = eval(e, bump(bump(p, i, -h), j, -h));
                (pp - pm - mp + mm) / (4.0 * h * h)
            }
        },
        h,
    )
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Wealth of the log consumer-saving problem with constant `R`, `ω` when
/// consumption is `c0 e^{(R-θ)t}`, from the variation-of-constants formula.
pub fn linear_wealth_x(r: f64, omega: f64, theta: f64, x0: f64, c0: f64, t: f64) -> f64 {
    let g = r - theta;
    // x' = R x + ω - c0 e^{gt}
    let particular = |t: f64| -omega / r + c0 * (g * t).exp() / (r - g);
    (x0 - particular(0.0)) * (r * t).exp() + particular(t)
}

/// Root of `a x^(a-1) = θ` by plain bisection.
pub fn cobb_douglas_rest_point(a: f64, theta: f64) -> f64 {
    let g = |x: f64| a * x.powf(a - 1.0) - theta;
    let (mut lo, mut hi) = (1e-6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
