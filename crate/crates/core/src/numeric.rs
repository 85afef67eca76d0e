//! Small grid utilities shared by the modules.

/// Derivative of samples `y` on the (possibly non-uniform) grid `t`.
///
/// Interior nodes use the centered three-point formula, endpoints the
/// second-order one-sided three-point formulas. Requires `t.len() >= 3`.
pub(crate) fn grid_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    debug_assert!(n >= 3 && y.len() == n);
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = t[i] - t[i - 1];
        let h2 = t[i + 1] - t[i];
        d[i] = -h2 / (h1 * (h1 + h2)) * y[i - 1] + (h2 - h1) / (h1 * h2) * y[i] + h1 / (h2 * (h1 + h2)) * y[i + 1];
    }
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * y[0] + (h1 + h2) / (h1 * h2) * y[1] - h1 / (h2 * (h1 + h2)) * y[2];
    let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
    d[n - 1] = h2 / (h1 * (h1 + h2)) * y[n - 3] - (h1 + h2) / (h1 * h2) * y[n - 2]
        + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * y[n - 1];
    d
}

/// Leading truncation error of [`grid_derivative`] at every node,
/// `h1 h2 |y'''| / 6` inside and `h1 (h1 + h2) |y'''| / 6` at the ends, with
/// `y'''` from the nearest four-point divided difference. Zero below four
/// nodes.
pub(crate) fn grid_derivative_error(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 4 {
        return vec![0.0; n];
    }
    let third = |j: usize| {
        let d1: Vec<f64> = (j..j + 3).map(|i| (y[i + 1] - y[i]) / (t[i + 1] - t[i])).collect();
        let d2 = [
            (d1[1] - d1[0]) / (t[j + 2] - t[j]),
            (d1[2] - d1[1]) / (t[j + 3] - t[j + 1]),
        ];
        6.0 * (d2[1] - d2[0]) / (t[j + 3] - t[j])
    };
    let h = |i: usize| t[i + 1] - t[i];
    (0..n)
        .map(|k| {
            let y3 = third(k.saturating_sub(1).min(n - 4)).abs();
            let err = if k == 0 {
                h(0) * (h(0) + h(1)) * y3
            } else if k == n - 1 {
                h(n - 2) * (h(n - 2) + h(n - 3)) * y3
            } else {
                h(k - 1) * h(k) * y3
            };
            if err.is_finite() {
                err / 6.0
            } else {
                0.0
            }
        })
        .collect()
}

pub(crate) fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Least-squares slope and intercept of `y` against `x`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`; `xs` increasing.
/// Values outside the range are clamped to the end samples.
pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|v| *v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] + w * (ys[j] - ys[j - 1])
}

pub(crate) fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
