//! Stationary point of the fluid ODEs.
//!
//! The stationary equations, with `c = alpha + beta`:
//!
//! ```text
//! lambda_B      = c x_1 + gamma min(x_1, y_1)
//! alpha x_{k-1} = c x_k + gamma min(x_k, y_k)      1 < k <= N
//! alpha y_{k+1} = c y_k + gamma min(x_k, y_k)      1 <= k < N
//! lambda_S      = c y_N + gamma min(x_N, y_N)
//! ```
//!
//! Two independent solvers are provided: [`solve_shooting`] walks the
//! broken line of level-1 solutions forward through the level map and
//! bisects on the last equation; [`solve_recursive`] runs a monotone
//! sweep from a lower bound on `x` and an upper bound on `y`.

mod recursion;
mod shooting;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::params::ModelParams;

pub use recursion::{solve_recursive, solve_recursive_with, RecursionScheme, RecursionTrace};
pub use shooting::{
    map_jacobian_check, shooting_path, slope_bound_check, solve_shooting, step_map,
    BrokenLinePoint, JacobianReport, MapCase, SlopeBoundReport,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixedPointError {
    #[error("recursion did not converge in {iterations} sweeps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("recursion lost monotonicity at sweep {iteration}, level {level}")]
    NotMonotone { iteration: usize, level: usize },
    #[error("shooting function does not change sign up to theta = {theta_max}")]
    BracketFailure { theta_max: f64 },
    #[error("fixed point violates the strict ordering at level {0}")]
    NonMonotoneInput(usize),
    #[error("point lies on a kink of the level map")]
    OnKink,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Solver {
    Shooting,
    Recursive,
    RecursiveAsPrinted,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Shooting => "shooting",
            Solver::Recursive => "recursive",
            Solver::RecursiveAsPrinted => "recursive-as-printed",
        })
    }
}

/// Sign pattern of `x* - y*` across the levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// (i): buyers exceed sellers at every level.
    BuyersEverywhere,
    /// (ii): sellers exceed buyers at every level.
    SellersEverywhere,
    /// (iii): single interior crossing.
    Crossing,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::BuyersEverywhere => "i",
            Regime::SellersEverywhere => "ii",
            Regime::Crossing => "iii",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// Number of levels with `x* > y*`.
    pub crossing: usize,
    pub regime: Regime,
    /// Levels with `x* == y*` exactly; counted on the seller side.
    pub tied_levels: Vec<usize>,
    pub trade_volume: f64,
    pub solver: Solver,
    /// Sup-norm defect over all 2N stationary equations.
    pub residual: f64,
    pub iterations: usize,
}

impl FixedPoint {
    pub(crate) fn assemble(
        x_star: Vec<f64>,
        y_star: Vec<f64>,
        params: &ModelParams,
        solver: Solver,
        iterations: usize,
    ) -> Result<Self, FixedPointError> {
        let (crossing, regime) = classify_regime(&x_star, &y_star)?;
        let tied_levels = x_star
            .iter()
            .zip(&y_star)
            .enumerate()
            .filter(|(_, (x, y))| x == y)
            .map(|(k, _)| k)
            .collect();
        Ok(Self {
            residual: residual(&x_star, &y_star, params),
            trade_volume: trade_volume(&x_star, &y_star, params),
            x_star,
            y_star,
            crossing,
            regime,
            tied_levels,
            solver,
            iterations,
        })
    }

    /// Sup-norm distance to another fixed point.
    pub fn distance(&self, other: &FixedPoint) -> f64 {
        self.x_star
            .iter()
            .zip(&other.x_star)
            .chain(self.y_star.iter().zip(&other.y_star))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_fluid_state(&self) -> crate::state::FluidState {
        crate::state::FluidState {
            x: self.x_star.clone(),
            y: self.y_star.clone(),
        }
    }

    /// `x*` strictly decreasing and `y*` strictly increasing.
    pub fn strictly_ordered(&self) -> bool {
        self.x_star.windows(2).all(|w| w[0] > w[1]) && self.y_star.windows(2).all(|w| w[0] < w[1])
    }
}

/// Sup-norm of the defects of the 2N stationary equations at `(x, y)`.
pub fn residual(x: &[f64], y: &[f64], params: &ModelParams) -> f64 {
    let n = x.len();
    let c = params.alpha() + params.beta();
    let (a, g) = (params.alpha(), params.gamma());
    let mut worst = 0.0f64;
    for k in 0..n {
        let m = g * x[k].min(y[k]);
        let in_x = if k == 0 { params.lambda_b() } else { a * x[k - 1] };
        let in_y = if k + 1 == n { params.lambda_s() } else { a * y[k + 1] };
        worst = worst.max((in_x - c * x[k] - m).abs());
        worst = worst.max((in_y - c * y[k] - m).abs());
    }
    worst
}

/// Crossing index and regime of a candidate fixed point.
///
/// Requires `x` nonincreasing and `y` nondecreasing (ties tolerated so that
/// underflowed tails do not trip the check). Levels with `x == y` count on
/// the seller side.
pub fn classify_regime(x: &[f64], y: &[f64]) -> Result<(usize, Regime), FixedPointError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(FixedPointError::InvalidInput("x and y must have equal, non-zero length".into()));
    }
    if let Some(k) = x.windows(2).position(|w| !(w[0] >= w[1])) {
        return Err(FixedPointError::NonMonotoneInput(k + 1));
    }
    if let Some(k) = y.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(FixedPointError::NonMonotoneInput(k + 1));
    }
    let n = x.len();
    let crossing = x.iter().zip(y).filter(|(a, b)| a > b).count();
    let regime = if crossing == n {
        Regime::BuyersEverywhere
    } else if crossing == 0 {
        Regime::SellersEverywhere
    } else {
        Regime::Crossing
    };
    Ok((crossing, regime))
}

/// `gamma * sum_k min(x_k, y_k)`.
pub fn trade_volume(x: &[f64], y: &[f64], params: &ModelParams) -> f64 {
    params.gamma() * x.iter().zip(y).map(|(a, b)| a.min(*b)).sum::<f64>()
}

/// When sellers dominate everywhere the buyer equations decouple into the
/// lower-triangular system `lambda_B = (alpha+beta+gamma) x_1`,
/// `alpha x_{k-1} = (alpha+beta+gamma) x_k`. Returns its sup-norm defect at `x`.
pub fn seller_regime_defect(x: &[f64], params: &ModelParams) -> f64 {
    let d = params.alpha() + params.beta() + params.gamma();
    let mut worst = (params.lambda_b() - d * x[0]).abs();
    for k in 1..x.len() {
        worst = worst.max((params.alpha() * x[k - 1] - d * x[k]).abs());
    }
    worst
}

/// Root of `(alpha+beta) u + gamma min(u, other) = rhs` for `rhs >= 0`.
#[inline]
pub(crate) fn solve_kinked(rhs: f64, other: f64, params: &ModelParams) -> f64 {
    let c = params.alpha() + params.beta();
    let u = rhs / (c + params.gamma());
    if u <= other {
        u
    } else {
        (rhs - params.gamma() * other) / c
    }
}
