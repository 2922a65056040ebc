//! Monotone sweep towards the fixed point.
//!
//! Start from `x^(0)` = buyers when every level is seller-dominated (a
//! lower bound for `x*`) and `y^(0)` = sellers with no trading at all (an
//! upper bound for `y*`):
//!
//! ```text
//! x1 = lambda_B / (alpha+beta+gamma),  x_i = alpha x_{i-1} / (alpha+beta+gamma)
//! yN = lambda_S / (alpha+beta),        y_i = alpha y_{i+1} / (alpha+beta)
//! ```
//!
//! Each sweep recomputes `x` from the previous `y` (levels ascending), then
//! `y` from the new `x` (levels descending). In the default
//! [`RecursionScheme::Monotone`] every scalar equation is solved exactly in
//! its own unknown, so each half-sweep is antitone in the other vector and
//! the iterates move monotonically: `x` up, `y` down.
//! [`RecursionScheme::AsPrinted`] instead freezes the whole `min` term at the
//! previous iterate; it oscillates with ratio `gamma/(alpha+beta)` and
//! diverges when that ratio exceeds one.

use super::{solve_kinked, FixedPoint, FixedPointError, Solver};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecursionScheme {
    #[default]
    Monotone,
    AsPrinted,
}

/// Every iterate `(x^(k), y^(k))`, starting with the initial bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecursionTrace {
    pub iterates: Vec<(Vec<f64>, Vec<f64>)>,
}

impl RecursionTrace {
    /// First `(sweep, level)` at which `x` decreased or `y` increased by
    /// more than `slack` (relative).
    pub fn first_monotonicity_break(&self, slack: f64) -> Option<(usize, usize)> {
        for (k, w) in self.iterates.windows(2).enumerate() {
            let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
            for i in 0..x0.len() {
                if x1[i] < x0[i] - slack * x0[i].abs() || y1[i] > y0[i] + slack * y0[i].abs() {
                    return Some((k + 1, i));
                }
            }
        }
        None
    }
}

fn initial_bounds(params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let n = params.n_levels();
    let a = params.alpha();
    let c = a + params.beta();
    let d = c + params.gamma();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    x[0] = params.lambda_b() / d;
    for i in 1..n {
        x[i] = a * x[i - 1] / d;
    }
    y[n - 1] = params.lambda_s() / c;
    for i in (0..n - 1).rev() {
        y[i] = a * y[i + 1] / c;
    }
    (x, y)
}

fn sweep(params: &ModelParams, scheme: RecursionScheme, x_prev: &[f64], y_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x_prev.len();
    let a = params.alpha();
    let c = a + params.beta();
    let g = params.gamma();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let inflow = if i == 0 { params.lambda_b() } else { a * x[i - 1] };
        x[i] = match scheme {
            RecursionScheme::Monotone => solve_kinked(inflow, y_prev[i], params),
            RecursionScheme::AsPrinted => (inflow - g * x_prev[i].min(y_prev[i])) / c,
        };
    }
    for i in (0..n).rev() {
        let inflow = if i + 1 == n { params.lambda_s() } else { a * y[i + 1] };
        y[i] = match scheme {
            RecursionScheme::Monotone => solve_kinked(inflow, x[i], params),
            RecursionScheme::AsPrinted => (inflow - g * x[i].min(y_prev[i])) / c,
        };
    }
    (x, y)
}

/// Fixed point by the monotone sweep; stops when the sup-norm change of a
/// sweep falls below `tol`. Monotonicity of the iterates is asserted on
/// every sweep.
pub fn solve_recursive(params: &ModelParams, tol: f64, max_iter: usize) -> Result<FixedPoint, FixedPointError> {
    solve_recursive_with(params, tol, max_iter, RecursionScheme::Monotone).map(|(fp, _)| fp)
}

/// As [`solve_recursive`], with a choice of scheme and the iterate history.
/// Only the monotone scheme enforces monotonicity.
pub fn solve_recursive_with(
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
    scheme: RecursionScheme,
) -> Result<(FixedPoint, RecursionTrace), FixedPointError> {
    if !(tol > 0.0) {
        return Err(FixedPointError::InvalidInput(format!("tol must be > 0, got {tol}")));
    }
    let (mut x, mut y) = initial_bounds(params);
    let mut trace = RecursionTrace {
        iterates: vec![(x.clone(), y.clone())],
    };
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iter {
        let (xn, yn) = sweep(params, scheme, &x, &y);
        let change = x
            .iter()
            .zip(&xn)
            .chain(y.iter().zip(&yn))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, |m, d| if d.is_nan() { f64::NAN } else { m.max(d) });
        if scheme == RecursionScheme::Monotone {
            for i in 0..x.len() {
                // a few ulps of slack for rounding near the limit
                if xn[i] < x[i] - 1e-14 * x[i] || yn[i] > y[i] + 1e-14 * y[i] {
                    return Err(FixedPointError::NotMonotone { iteration, level: i });
                }
            }
        }
        x = xn;
        y = yn;
        trace.iterates.push((x.clone(), y.clone()));
        if !change.is_finite() {
            return Err(FixedPointError::NoConvergence {
                iterations: iteration,
                last_change: change,
            });
        }
        last_change = change;
        if change < tol {
            let solver = match scheme {
                RecursionScheme::Monotone => Solver::Recursive,
                RecursionScheme::AsPrinted => Solver::RecursiveAsPrinted,
            };
            let fp = FixedPoint::assemble(x, y, params, solver, iteration)?;
            return Ok((fp, trace));
        }
    }
    Err(FixedPointError::NoConvergence {
        iterations: max_iter,
        last_change,
    })
}
