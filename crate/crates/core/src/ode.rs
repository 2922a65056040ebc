//! Fluid-limit ODE system and its numerical integration.
//!
//! With `c = alpha + beta` and `m_k = min(x_k, y_k)`:
//!
//! ```text
//! x_1' = lambda_B        - c x_1 - gamma m_1
//! x_k' = alpha x_{k-1}   - c x_k - gamma m_k     (k > 1)
//! y_k' = alpha y_{k+1}   - c y_k - gamma m_k     (k < N)
//! y_N' = lambda_S        - c y_N - gamma m_N
//! ```
//!
//! The right-hand side is piecewise linear and globally Lipschitz, so an
//! explicit adaptive Dormand-Prince 5(4) pair is used and the `min` kink is
//! left to step-size control.

use serde::Serialize;
use thiserror::Error;

use crate::params::ModelParams;
use crate::state::{FluidState, StateError};

/// Default absolute and relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Sup-norm of the right-hand side below which a long run counts as
/// converged.
pub const RHS_CONVERGED: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size collapsed to {h:e} at tau = {tau}")]
    StepUnderflow { tau: f64, h: f64 },
    #[error("component {index} went negative ({value:e}) at tau = {tau}")]
    NegativeState { tau: f64, index: usize, value: f64 },
    #[error("initial ordering fails at level {level} ({side})")]
    HypothesisViolated { level: usize, side: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Right-hand side on the concatenated vector `z = (x, y)`.
pub fn rhs_into(params: &ModelParams, z: &[f64], dz: &mut [f64]) {
    let n = z.len() / 2;
    let (x, y) = z.split_at(n);
    let (dx, dy) = dz.split_at_mut(n);
    let a = params.alpha();
    let c = params.alpha() + params.beta();
    let g = params.gamma();
    for k in 0..n {
        let m = g * x[k].min(y[k]);
        let in_x = if k == 0 { params.lambda_b() } else { a * x[k - 1] };
        let in_y = if k + 1 == n { params.lambda_s() } else { a * y[k + 1] };
        dx[k] = in_x - c * x[k] - m;
        dy[k] = in_y - c * y[k] - m;
    }
}

/// Time derivative `(dx, dy)` at `state`.
pub fn rhs(state: &FluidState, params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let z = state.to_vec();
    let mut dz = vec![0.0; z.len()];
    rhs_into(params, &z, &mut dz);
    let n = state.n_levels();
    let dy = dz.split_off(n);
    (dz, dy)
}

/// Numerical solution on the accepted-step grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<FluidState>,
    pub tol: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Sum of the absolute local error estimates over accepted steps.
    pub error_estimate: f64,
}

impl OdeSolution {
    pub fn final_state(&self) -> &FluidState {
        self.states.last().expect("solution has at least one point")
    }
}

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes are not needed.
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
// difference between the 5th and 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive explicit integrator over a plain vector field. Components are
/// expected to stay non-negative; values in `[-tol, 0)` are clamped.
pub(crate) struct Integrator<F> {
    f: F,
    tol: f64,
    h: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    fsal_valid: bool,
    pub accepted: usize,
    pub rejected: usize,
    pub error_estimate: f64,
}

impl<F: FnMut(&[f64], &mut [f64])> Integrator<F> {
    pub fn new(f: F, dim: usize, tol: f64) -> Self {
        Self {
            f,
            tol,
            h: 0.0,
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            fsal_valid: false,
            accepted: 0,
            rejected: 0,
            error_estimate: 0.0,
        }
    }

    fn initial_step(&mut self, y: &[f64], span: f64) -> f64 {
        (self.f)(y, &mut self.k[0]);
        self.fsal_valid = true;
        let d0 = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d1 = self.k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-4
        } else {
            0.01 * d0 / d1
        };
        h.min(span).max(1e-10)
    }

    /// Advances `y` from `*t` to exactly `t_target`, calling `on_step` after
    /// every accepted step.
    pub fn advance(
        &mut self,
        y: &mut [f64],
        t: &mut f64,
        t_target: f64,
        mut on_step: impl FnMut(f64, &[f64]),
    ) -> Result<(), OdeError> {
        if t_target <= *t {
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(y, t_target - *t);
        }
        let n = y.len();
        while *t < t_target {
            let remaining = t_target - *t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            if h < 1e-13 * t.abs().max(1.0) && !last {
                return Err(OdeError::StepUnderflow { tau: *t, h });
            }
            if !self.fsal_valid {
                (self.f)(y, &mut self.k[0]);
                self.fsal_valid = true;
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += h * A[s][j] * self.k[j][i];
                    }
                    self.tmp[i] = acc;
                }
                (self.f)(&self.tmp, &mut self.k[s]);
            }
            // tmp now holds the 5th order solution (stage 7 abscissa is 1)
            let mut norm = 0.0;
            let mut abs_err = 0.0f64;
            for i in 0..n {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * self.k[s][i];
                }
                e *= h;
                let sc = self.tol + self.tol * y[i].abs().max(self.tmp[i].abs());
                norm += (e / sc) * (e / sc);
                abs_err = abs_err.max(e.abs());
            }
            let norm = (norm / n as f64).sqrt();
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            if norm <= 1.0 {
                *t = if last { t_target } else { *t + h };
                y.copy_from_slice(&self.tmp);
                self.k.swap(0, 6);
                let mut clamped = false;
                for (i, v) in y.iter_mut().enumerate() {
                    if *v < 0.0 {
                        if *v >= -self.tol {
                            *v = 0.0;
                            clamped = true;
                        } else {
                            return Err(OdeError::NegativeState {
                                tau: *t,
                                index: i,
                                value: *v,
                            });
                        }
                    }
                }
                self.fsal_valid = !clamped;
                self.accepted += 1;
                self.error_estimate += abs_err;
                on_step(*t, y);
                // a clipped final step should not shrink the next proposal
                self.h = if last { self.h.max(h * factor) } else { h * factor };
            } else {
                self.rejected += 1;
                self.h = h * factor.min(1.0);
                if self.h < 1e-13 * t.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow { tau: *t, h: self.h });
                }
            }
        }
        Ok(())
    }
}

fn check_tol(tol: f64) -> Result<(), OdeError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(OdeError::InvalidInput(format!("tolerance must be > 0, got {tol}")));
    }
    Ok(())
}

/// Integrates from `init` over `[0, tau_max]`, recording every accepted step.
pub fn integrate(
    init: &FluidState,
    params: &ModelParams,
    tau_max: f64,
    tol: f64,
) -> Result<OdeSolution, OdeError> {
    init.check_dimension(params.n_levels())?;
    check_tol(tol)?;
    if !(tau_max >= 0.0) || !tau_max.is_finite() {
        return Err(OdeError::InvalidInput(format!("tau_max must be >= 0, got {tau_max}")));
    }
    let mut z = init.to_vec();
    let mut integ = Integrator::new(|z: &[f64], dz: &mut [f64]| rhs_into(params, z, dz), z.len(), tol);
    let mut times = vec![0.0];
    let mut states = vec![init.clone()];
    let mut t = 0.0;
    integ.advance(&mut z, &mut t, tau_max, |t, z| {
        times.push(t);
        states.push(FluidState::from_slice(z));
    })?;
    Ok(OdeSolution {
        times,
        states,
        tol,
        accepted_steps: integ.accepted,
        rejected_steps: integ.rejected,
        error_estimate: integ.error_estimate,
    })
}

/// Solution values at the given ascending times (the first may be 0).
pub fn integrate_at(
    init: &FluidState,
    params: &ModelParams,
    times: &[f64],
    tol: f64,
) -> Result<Vec<FluidState>, OdeError> {
    init.check_dimension(params.n_levels())?;
    check_tol(tol)?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(OdeError::InvalidInput("output times must be ascending and >= 0".into()));
    }
    let mut z = init.to_vec();
    let mut integ = Integrator::new(|z: &[f64], dz: &mut [f64]| rhs_into(params, z, dz), z.len(), tol);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        integ.advance(&mut z, &mut t, target, |_, _| {})?;
        out.push(FluidState::from_slice(&z));
    }
    Ok(out)
}

/// Result of a long run towards the fixed point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRun {
    pub state: FluidState,
    pub tau: f64,
    pub rhs_norm: f64,
    /// `true` when the right-hand side fell below [`RHS_CONVERGED`]; `false`
    /// when the time budget ran out first.
    pub converged: bool,
}

/// Integrates until the sup-norm of the right-hand side drops below
/// [`RHS_CONVERGED`] or `tau_budget` is used up.
pub fn integrate_to_rest(
    init: &FluidState,
    params: &ModelParams,
    tol: f64,
    tau_budget: f64,
) -> Result<LongRun, OdeError> {
    init.check_dimension(params.n_levels())?;
    check_tol(tol)?;
    let mut z = init.to_vec();
    let mut dz = vec![0.0; z.len()];
    let mut integ = Integrator::new(|z: &[f64], dz: &mut [f64]| rhs_into(params, z, dz), z.len(), tol);
    let mut t = 0.0;
    let chunk = 1.0;
    loop {
        rhs_into(params, &z, &mut dz);
        let norm = dz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm < RHS_CONVERGED || t >= tau_budget {
            return Ok(LongRun {
                state: FluidState::from_slice(&z),
                tau: t,
                rhs_norm: norm,
                converged: norm < RHS_CONVERGED,
            });
        }
        let target = (t + chunk).min(tau_budget);
        integ.advance(&mut z, &mut t, target, |_, _| {})?;
    }
}

/// Per-level outcome of a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `x_lower[k] <= x_upper[k] + tol` at every grid point.
    pub x_ordered: Vec<bool>,
    /// `y_lower[k] + tol >= y_upper[k]` at every grid point.
    pub y_ordered: Vec<bool>,
    /// Largest amount by which either ordering was broken (0 if never).
    pub max_violation: f64,
    pub grid_points: usize,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        self.x_ordered.iter().chain(&self.y_ordered).all(|&b| b)
    }
}

/// Integrates two initial conditions with `lower.x <= upper.x` and
/// `lower.y >= upper.y` (componentwise, all levels) on one shared grid and
/// reports whether that ordering survives up to `tau_max`.
///
/// Both copies are advanced as one stacked system so they share every step;
/// the integrator tolerance is `min(DEFAULT_TOL, tol / (10 (1 + M)))` with
/// `M` the a priori bound on every component, so the mixed absolute/relative
/// step error stays an order below `tol`.
pub fn check_comparison(
    lower: &FluidState,
    upper: &FluidState,
    params: &ModelParams,
    tau_max: f64,
    tol: f64,
) -> Result<ComparisonReport, OdeError> {
    let n = params.n_levels();
    lower.check_dimension(n)?;
    upper.check_dimension(n)?;
    check_tol(tol)?;
    for k in 0..n {
        if lower.x[k] > upper.x[k] {
            return Err(OdeError::HypothesisViolated { level: k, side: "x" });
        }
        if lower.y[k] < upper.y[k] {
            return Err(OdeError::HypothesisViolated { level: k, side: "y" });
        }
    }
    let mut z = lower.to_vec();
    z.extend(upper.to_vec());
    let field = |z: &[f64], dz: &mut [f64]| {
        let (a, b) = z.split_at(2 * n);
        let (da, db) = dz.split_at_mut(2 * n);
        rhs_into(params, a, da);
        rhs_into(params, b, db);
    };
    let mut report = ComparisonReport {
        x_ordered: vec![true; n],
        y_ordered: vec![true; n],
        max_violation: 0.0,
        grid_points: 0,
    };
    let mut inspect = |z: &[f64]| {
        report.grid_points += 1;
        for k in 0..n {
            let dx = z[k] - z[2 * n + k];
            let dy = z[3 * n + k] - z[n + k];
            for (gap, ok) in [(dx, &mut report.x_ordered[k]), (dy, &mut report.y_ordered[k])] {
                if gap > 0.0 {
                    report.max_violation = report.max_violation.max(gap);
                }
                if gap > tol {
                    *ok = false;
                }
            }
        }
    };
    inspect(&z);
    let c = params.alpha() + params.beta();
    let bound = z
        .iter()
        .fold((params.lambda_b() / c).max(params.lambda_s() / c), |m, v| m.max(*v));
    let mut integ = Integrator::new(field, 4 * n, (tol / (10.0 * (1.0 + bound))).min(DEFAULT_TOL));
    let mut t = 0.0;
    integ.advance(&mut z, &mut t, tau_max, |_, z| inspect(z))?;
    Ok(report)
}

/// The two bracketing initial conditions built from `init`: the lower one has
/// no buyers and every seller level at `max(lambda_S/(alpha+beta), max_k y_k)`,
/// the upper one has no sellers and every buyer level at
/// `max(lambda_B/(alpha+beta), max_k x_k)`.
pub fn extremal_initial_conditions(init: &FluidState, params: &ModelParams) -> (FluidState, FluidState) {
    let n = init.n_levels();
    let c = params.alpha() + params.beta();
    let y_top = init.y.iter().fold(params.lambda_s() / c, |m, v| m.max(*v));
    let x_top = init.x.iter().fold(params.lambda_b() / c, |m, v| m.max(*v));
    (
        FluidState {
            x: vec![0.0; n],
            y: vec![y_top; n],
        },
        FluidState {
            x: vec![x_top; n],
            y: vec![0.0; n],
        },
    )
}

/// Direction in which a solution is expected to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    /// x nondecreasing, y nonincreasing.
    BuyersUp,
    /// x nonincreasing, y nondecreasing.
    BuyersDown,
}

/// Largest step against the expected direction over all components and grid
/// points; zero when the solution is monotone as claimed.
pub fn monotonicity_defect(solution: &OdeSolution, dir: Monotonicity) -> f64 {
    let sign = match dir {
        Monotonicity::BuyersUp => 1.0,
        Monotonicity::BuyersDown => -1.0,
    };
    let mut worst = 0.0f64;
    for w in solution.states.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for k in 0..a.x.len() {
            worst = worst.max(-sign * (b.x[k] - a.x[k]));
            worst = worst.max(sign * (b.y[k] - a.y[k]));
        }
    }
    worst
}
