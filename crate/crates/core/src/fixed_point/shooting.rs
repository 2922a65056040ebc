//! Shooting along the broken line of level-1 solutions.
//!
//! Points `(v, w)` stand for candidate `(x_k, y_k)`. The solutions of the
//! first buyer equation form a broken line in the quadrant: a vertical ray
//! `v = c1` for `w >= c1` with `c1 = lambda_B / (alpha+beta+gamma)`, and a
//! segment from `(c1, c1)` down to `(lambda_B / (alpha+beta), 0)`. The
//! level map pushes a point at level k to level k+1 using the k+1 buyer
//! equation and the k seller equation. The last seller equation then picks
//! out one point of the image line.
//!
//! The line is parametrised by `theta >= 0`: `theta` in `[0, 1]` runs along
//! the segment from the horizontal axis up to the bisectrix, `theta > 1`
//! climbs the ray with `w = theta * c1`.

use serde::Serialize;

use super::{solve_kinked, FixedPoint, FixedPointError, Solver};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BrokenLinePoint {
    pub v: f64,
    pub w: f64,
    /// Zero-based level.
    pub level: usize,
}

impl BrokenLinePoint {
    pub fn new(v: f64, w: f64, level: usize) -> Result<Self, FixedPointError> {
        if !(v >= 0.0 && w >= 0.0 && v.is_finite() && w.is_finite()) {
            return Err(FixedPointError::InvalidInput(format!(
                "broken-line point must be finite and non-negative, got ({v}, {w})"
            )));
        }
        Ok(Self { v, w, level })
    }
}

/// Maps a point at level k to level k+1.
///
/// `w' = ((alpha+beta) w + gamma min(v, w)) / alpha` directly; `v'` is the
/// root of the increasing piecewise-linear `(alpha+beta) u + gamma min(u, w')
/// = alpha v`, taken from whichever linear branch is consistent.
pub fn step_map(p: BrokenLinePoint, params: &ModelParams) -> Result<BrokenLinePoint, FixedPointError> {
    if p.level + 1 >= params.n_levels() {
        return Err(FixedPointError::InvalidInput(format!(
            "no level above {} in a {}-level book",
            p.level + 1,
            params.n_levels()
        )));
    }
    let p = BrokenLinePoint::new(p.v, p.w, p.level)?;
    Ok(map_unchecked(p.v, p.w, p.level, params))
}

#[inline]
fn map_unchecked(v: f64, w: f64, level: usize, params: &ModelParams) -> BrokenLinePoint {
    let a = params.alpha();
    let w_next = ((a + params.beta()) * w + params.gamma() * v.min(w)) / a;
    let v_next = solve_kinked(a * v, w_next, params);
    debug_assert!(v_next >= 0.0);
    BrokenLinePoint {
        v: v_next,
        w: w_next,
        level: level + 1,
    }
}

/// Which linear piece of the level map applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapCase {
    /// `v_k > w_k` and `v_{k+1} > w_{k+1}`.
    BuyerHeavyBoth,
    /// `v_k > w_k` and `v_{k+1} < w_{k+1}`.
    Crossing,
    /// `v_k < w_k` (then `v_{k+1} < w_{k+1}` as well).
    SellerHeavyBoth,
}

impl MapCase {
    fn of(from: (f64, f64), to: (f64, f64)) -> Option<Self> {
        if from.0 == from.1 || to.0 == to.1 {
            return None;
        }
        Some(match (from.0 > from.1, to.0 > to.1) {
            (true, true) => MapCase::BuyerHeavyBoth,
            (true, false) => MapCase::Crossing,
            (false, false) => MapCase::SellerHeavyBoth,
            (false, true) => unreachable!("v < w cannot map to v' > w'"),
        })
    }
}

/// Finite-difference check of how the level map transforms slopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub case: MapCase,
    /// `dw_k / dv_k` of the tangent direction.
    pub slope_in: f64,
    /// Numerical `dw_{k+1} / dv_{k+1}` of the image direction.
    pub slope_out: f64,
    /// Case factor with `A_{k+1} = alpha+beta+gamma dw_{k+1}/dv_{k+1}` and
    /// `B_k = alpha+beta+gamma dv_k/dw_k`.
    pub analytic_factor: f64,
    /// `slope_out / slope_in`.
    pub numeric_factor: f64,
    pub relative_difference: f64,
    /// Same case factor with the coordinate ratios `w_{k+1}/v_{k+1}` and
    /// `v_k/w_k` in `A` and `B`; kept for comparison only.
    pub coordinate_ratio_factor: f64,
}

/// Differentiates the level map at `p` along the tangent `(dv, dw)` with
/// central differences of half-width `h` and compares the induced slope
/// ratio with the closed-form factor of the applicable case.
pub fn map_jacobian_check(
    p: BrokenLinePoint,
    tangent: (f64, f64),
    params: &ModelParams,
    h: f64,
) -> Result<JacobianReport, FixedPointError> {
    let (dv, dw) = tangent;
    if dv == 0.0 || !dv.is_finite() || !dw.is_finite() {
        return Err(FixedPointError::InvalidInput("tangent must have finite dw/dv".into()));
    }
    if !(h > 0.0) {
        return Err(FixedPointError::InvalidInput("h must be > 0".into()));
    }
    let centre = step_map(p, params)?;
    let plus = step_map(BrokenLinePoint::new(p.v + h * dv, p.w + h * dw, p.level)?, params)?;
    let minus = step_map(BrokenLinePoint::new(p.v - h * dv, p.w - h * dw, p.level)?, params)?;
    let case = MapCase::of((p.v, p.w), (centre.v, centre.w)).ok_or(FixedPointError::OnKink)?;
    let case_plus = MapCase::of((p.v + h * dv, p.w + h * dw), (plus.v, plus.w));
    let case_minus = MapCase::of((p.v - h * dv, p.w - h * dw), (minus.v, minus.w));
    if case_plus != Some(case) || case_minus != Some(case) {
        return Err(FixedPointError::OnKink);
    }
    let d_out_v = plus.v - minus.v;
    if d_out_v == 0.0 {
        return Err(FixedPointError::InvalidInput("image direction is vertical".into()));
    }
    let slope_in = dw / dv;
    let slope_out = (plus.w - minus.w) / d_out_v;

    let (a, b, g) = (params.alpha(), params.beta(), params.gamma());
    let d = a + b + g;
    let analytic_factor = match case {
        MapCase::BuyerHeavyBoth => {
            // w' = d w / a and v' = (a v - g w') / (a + b)
            let r = d / a;
            let out = (a + b) * r * slope_in / (a - g * r * slope_in);
            let a_next = a + b + g * out;
            a_next * d / (a * a)
        }
        MapCase::Crossing => d * d / (a * a),
        MapCase::SellerHeavyBoth => {
            let b_k = a + b + g / slope_in;
            b_k * d / (a * a)
        }
    };
    let coordinate_ratio_factor = match case {
        MapCase::BuyerHeavyBoth => (a + b + g * centre.w / centre.v) * d / (a * a),
        MapCase::Crossing => d * d / (a * a),
        MapCase::SellerHeavyBoth => (a + b + g * p.v / p.w) * d / (a * a),
    };
    let numeric_factor = slope_out / slope_in;
    Ok(JacobianReport {
        case,
        slope_in,
        slope_out,
        analytic_factor,
        numeric_factor,
        relative_difference: (numeric_factor - analytic_factor).abs() / analytic_factor.abs(),
        coordinate_ratio_factor,
    })
}

struct Line {
    c1: f64,
    v_axis: f64,
}

impl Line {
    fn new(params: &ModelParams) -> Self {
        let c = params.alpha() + params.beta();
        Self {
            c1: params.lambda_b() / (c + params.gamma()),
            v_axis: params.lambda_b() / c,
        }
    }

    fn point(&self, theta: f64) -> (f64, f64) {
        if theta <= 1.0 {
            (self.v_axis + theta * (self.c1 - self.v_axis), theta * self.c1)
        } else {
            (self.c1, theta * self.c1)
        }
    }
}

/// The level-1..N points reached from parameter `theta` on the level-1 line.
pub fn shooting_path(params: &ModelParams, theta: f64) -> Vec<BrokenLinePoint> {
    let (v, w) = Line::new(params).point(theta);
    let mut path = Vec::with_capacity(params.n_levels());
    let mut p = BrokenLinePoint { v, w, level: 0 };
    path.push(p);
    for _ in 1..params.n_levels() {
        p = map_unchecked(p.v, p.w, p.level, params);
        path.push(p);
    }
    path
}

fn terminal_point(params: &ModelParams, line: &Line, theta: f64) -> (f64, f64) {
    let (mut v, mut w) = line.point(theta);
    for k in 1..params.n_levels() {
        let p = map_unchecked(v, w, k - 1, params);
        v = p.v;
        w = p.w;
    }
    (v, w)
}

/// Defect of the last seller equation at the end of the path.
fn shooting_defect(params: &ModelParams, line: &Line, theta: f64) -> f64 {
    let (v, w) = terminal_point(params, line, theta);
    (params.alpha() + params.beta()) * w + params.gamma() * v.min(w) - params.lambda_s()
}

/// Fixed point by bisection on the level-1 line parameter.
///
/// The defect is `-lambda_S` at `theta = 0` (no sellers anywhere) and
/// positive once `w_1 >= lambda_S / (alpha+beta)`, because `w` never
/// decreases along the map. Bisection runs until the midpoint is no longer
/// representable between the bracket ends.
pub fn solve_shooting(params: &ModelParams) -> Result<FixedPoint, FixedPointError> {
    let line = Line::new(params);
    let c = params.alpha() + params.beta();
    let mut hi = 2.0 * (params.lambda_s() / (c * line.c1)).max(1.0);
    let mut doublings = 0;
    while shooting_defect(params, &line, hi) <= 0.0 {
        doublings += 1;
        hi *= 2.0;
        if doublings > 64 || !hi.is_finite() {
            return Err(FixedPointError::BracketFailure { theta_max: hi });
        }
    }
    let mut lo = 0.0;
    let mut g_lo = -params.lambda_s();
    let mut g_hi = shooting_defect(params, &line, hi);
    let mut iterations = 0;
    while iterations < 4000 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let g = shooting_defect(params, &line, mid);
        if g == 0.0 {
            lo = mid;
            hi = mid;
            g_lo = 0.0;
            g_hi = 0.0;
            break;
        } else if g < 0.0 {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
    }
    let theta = if g_lo.abs() <= g_hi.abs() { lo } else { hi };
    let path = shooting_path(params, theta);
    let x = path.iter().map(|p| p.v).collect();
    let y = path.iter().map(|p| p.w).collect();
    FixedPoint::assemble(x, y, params, Solver::Shooting, iterations)
}

/// Outcome of sampling the slope of the level-N image line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeBoundReport {
    /// Sample points above the bisectrix away from kinks.
    pub checked: usize,
    /// Samples whose slope was not below `-gamma / (alpha+beta)`.
    pub violations: usize,
    /// Largest `slope - (-gamma/(alpha+beta))` seen (negative when the
    /// bound holds everywhere).
    pub worst_margin: f64,
}

/// Samples `dw_N/dv_N` along the image of the level-1 segment at `samples`
/// evenly spaced interior parameters and checks that wherever the image
/// lies strictly above the bisectrix it is steeper than the sloped piece of
/// the last seller equation, `-gamma / (alpha+beta)`. Samples closer than
/// `h` to a kink are skipped.
pub fn slope_bound_check(params: &ModelParams, samples: usize, h: f64) -> SlopeBoundReport {
    let line = Line::new(params);
    let bound = -params.gamma() / (params.alpha() + params.beta());
    let mut report = SlopeBoundReport {
        checked: 0,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
    };
    for i in 1..=samples {
        let theta = i as f64 / (samples + 1) as f64;
        let (lo_t, hi_t) = (theta - h, theta + h);
        let p0 = terminal_point(params, &line, lo_t);
        let p1 = terminal_point(params, &line, theta);
        let p2 = terminal_point(params, &line, hi_t);
        if !(p0.1 > p0.0 && p1.1 > p1.0 && p2.1 > p2.0) {
            continue;
        }
        let left = (p1.1 - p0.1) / (p1.0 - p0.0);
        let right = (p2.1 - p1.1) / (p2.0 - p1.0);
        if !left.is_finite() || !right.is_finite() || (left - right).abs() > 1e-4 * left.abs().max(1.0) {
            continue;
        }
        let slope = 0.5 * (left + right);
        report.checked += 1;
        report.worst_margin = report.worst_margin.max(slope - bound);
        if !(slope < bound) {
            report.violations += 1;
        }
    }
    report
}
