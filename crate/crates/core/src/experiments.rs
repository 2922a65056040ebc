//! Monte Carlo studies of the fluid limit.
//!
//! Replicas run in parallel; results are gathered in replica order so the
//! reports do not depend on scheduling. Replica `r` at scaling level `L`
//! uses stream seed `replica_seed(replica_seed(master, L), r)`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fixed_point::{solve_shooting, FixedPointError, Regime};
use crate::ode::{integrate_at, OdeError, DEFAULT_TOL};
use crate::params::{ModelParams, ParamError, RawParams, ScalingLevel};
use crate::rng::replica_seed;
use crate::sim::{empirical_equilibrium, sample_grid, simulate, SimError, SimOptions};
use crate::state::FluidState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fixed point at lambda_s = {lambda_s} has residual {residual:e} above {tol:e}")]
    ResidualTooLarge { lambda_s: f64, residual: f64, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linearly interpolated quantiles; `None` for an empty sample.
pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Some(Quantiles {
        min: v[0],
        q25: at(0.25),
        median: at(0.5),
        q75: at(0.75),
        max: v[v.len() - 1],
    })
}

/// Distances collected at one scaling level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub scale: u64,
    /// One stream seed per replica (a single entry for equilibrium runs).
    pub seeds: Vec<u64>,
    /// Per-replica sup-distances, or per-sample distances for equilibrium.
    pub distances: Vec<f64>,
    pub quantiles: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub params: RawParams,
    pub master_seed: u64,
    /// Horizon `T` (fluid convergence) or last sample time (equilibrium).
    pub horizon: f64,
    pub grid_step: f64,
    /// Reference point for equilibrium runs.
    pub reference: Option<FluidState>,
    pub levels: Vec<LevelSummary>,
}

impl ConvergenceReport {
    pub fn medians(&self) -> Vec<Option<f64>> {
        self.levels
            .iter()
            .map(|l| l.quantiles.map(|q| q.median))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    /// Shared sampling step as a fraction of the horizon.
    pub grid_fraction: f64,
    pub ode_tol: f64,
    pub sim: SimOptions,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            grid_fraction: 0.01,
            ode_tol: DEFAULT_TOL,
            sim: SimOptions::default(),
        }
    }
}

fn check_levels(levels: &[u64]) -> Result<Vec<ScalingLevel>, ExperimentError> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::InvalidInput(
            "scaling levels must be strictly increasing".into(),
        ));
    }
    levels
        .iter()
        .map(|&l| ScalingLevel::new(l).map_err(ExperimentError::from))
        .collect()
}

/// For each scaling level, the distribution over replicas of
/// `sup_tau dist(V^(L)(tau), (x(tau), y(tau)))` on a shared grid over
/// `[0, horizon]`, Euclidean over all 2N coordinates.
pub fn fluid_convergence(
    params: &ModelParams,
    init: &FluidState,
    levels: &[u64],
    horizon: f64,
    replicas: usize,
    master_seed: u64,
    opts: &ExperimentOptions,
) -> Result<ConvergenceReport, ExperimentError> {
    let scales = check_levels(levels)?;
    if replicas == 0 {
        return Err(ExperimentError::InvalidInput("need at least one replica".into()));
    }
    if !(horizon > 0.0) {
        return Err(ExperimentError::InvalidInput("horizon must be > 0".into()));
    }
    let dt = opts.grid_fraction * horizon;
    let grid = sample_grid(horizon, dt);
    let fluid = integrate_at(init, params, &grid, opts.ode_tol)?;

    let mut out = Vec::with_capacity(scales.len());
    for scale in scales {
        let level_seed = replica_seed(master_seed, scale.get());
        let seeds: Vec<u64> = (0..replicas as u64).map(|r| replica_seed(level_seed, r)).collect();
        let distances = seeds
            .par_iter()
            .map(|&seed| {
                let traj = simulate(params, scale, init, horizon, dt, seed, &opts.sim)?;
                debug_assert_eq!(traj.times, grid);
                Ok(traj
                    .states
                    .iter()
                    .zip(&fluid)
                    .map(|(v, x)| v.distance(x))
                    .fold(0.0, f64::max))
            })
            .collect::<Result<Vec<f64>, SimError>>()?;
        out.push(LevelSummary {
            scale: scale.get(),
            seeds,
            quantiles: quantiles(&distances),
            distances,
        });
    }
    Ok(ConvergenceReport {
        params: params.to_raw(),
        master_seed,
        horizon,
        grid_step: dt,
        reference: None,
        levels: out,
    })
}

/// Distances of long-run samples from the fixed point, per scaling level.
pub fn equilibrium_concentration(
    params: &ModelParams,
    levels: &[u64],
    burn_in: f64,
    n_samples: usize,
    sample_gap: f64,
    master_seed: u64,
    opts: &ExperimentOptions,
) -> Result<ConvergenceReport, ExperimentError> {
    let scales = check_levels(levels)?;
    let fp = solve_shooting(params)?;
    let reference = fp.as_fluid_state();
    let out = scales
        .par_iter()
        .map(|&scale| {
            let seed = replica_seed(master_seed, scale.get());
            let samples = empirical_equilibrium(params, scale, burn_in, n_samples, sample_gap, seed, &opts.sim)?;
            let distances: Vec<f64> = samples.iter().map(|s| s.distance(&reference)).collect();
            Ok(LevelSummary {
                scale: scale.get(),
                seeds: vec![seed],
                quantiles: quantiles(&distances),
                distances,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(ConvergenceReport {
        params: params.to_raw(),
        master_seed,
        horizon: burn_in + n_samples.saturating_sub(1) as f64 * sample_gap,
        grid_step: sample_gap,
        reference: Some(reference),
        levels: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub lambda_s: f64,
    pub crossing: usize,
    pub regime: Regime,
    pub trade_volume: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub params: RawParams,
    pub points: Vec<SweepPoint>,
    /// First swept value at which no level has more buyers than sellers.
    pub saturation_onset: Option<f64>,
}

/// Fixed point summary for each seller arrival rate in `lambda_s_values`
/// (strictly increasing). Points whose residual exceeds `tol` are an error.
pub fn overproduction_sweep(
    params: &ModelParams,
    lambda_s_values: &[f64],
    tol: f64,
) -> Result<SweepReport, ExperimentError> {
    if lambda_s_values.is_empty() || lambda_s_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ExperimentError::InvalidInput(
            "lambda_s values must be non-empty and strictly increasing".into(),
        ));
    }
    let points = lambda_s_values
        .par_iter()
        .map(|&ls| {
            let p = params.with_lambda_s(ls)?;
            let fp = solve_shooting(&p)?;
            if !(fp.residual <= tol) {
                return Err(ExperimentError::ResidualTooLarge {
                    lambda_s: ls,
                    residual: fp.residual,
                    tol,
                });
            }
            Ok(SweepPoint {
                lambda_s: ls,
                crossing: fp.crossing,
                regime: fp.regime,
                trade_volume: fp.trade_volume,
                residual: fp.residual,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let saturation_onset = points.iter().find(|p| p.crossing == 0).map(|p| p.lambda_s);
    Ok(SweepReport {
        params: params.to_raw(),
        points,
        saturation_onset,
    })
}
