//! Python bindings: `import lobfluid`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lobfluid_core::experiments::{self, ExperimentOptions};
use lobfluid_core::fixed_point::{self, BrokenLinePoint, FixedPoint};
use lobfluid_core::ode;
use lobfluid_core::sim::{self, SimError, SimOptions};
use lobfluid_core::{FluidState, ScalingLevel};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Validated model parameters.
#[pyclass(name = "ModelParams", frozen)]
struct PyModelParams {
    inner: lobfluid_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (n, lambda_b, lambda_s, alpha, beta, gamma))]
    fn new(n: usize, lambda_b: f64, lambda_s: f64, alpha: f64, beta: f64, gamma: f64) -> PyResult<Self> {
        lobfluid_core::ModelParams::new(n, lambda_b, lambda_s, alpha, beta, gamma)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n_levels()
    }
    #[getter]
    fn lambda_b(&self) -> f64 {
        self.inner.lambda_b()
    }
    #[getter]
    fn lambda_s(&self) -> f64 {
        self.inner.lambda_s()
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(n={}, lambda_b={}, lambda_s={}, alpha={}, beta={}, gamma={})",
            p.n_levels(),
            p.lambda_b(),
            p.lambda_s(),
            p.alpha(),
            p.beta(),
            p.gamma()
        )
    }
}

fn initial(p: &PyModelParams, x0: Option<Vec<f64>>, y0: Option<Vec<f64>>) -> PyResult<FluidState> {
    let n = p.inner.n_levels();
    let state = FluidState::new(x0.unwrap_or_else(|| vec![0.0; n]), y0.unwrap_or_else(|| vec![0.0; n]))
        .map_err(value_err)?;
    state.check_dimension(n).map_err(value_err)?;
    Ok(state)
}

fn path_dict<'py>(py: Python<'py>, times: Vec<f64>, states: &[FluidState]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tau", times)?;
    d.set_item("x", states.iter().map(|s| s.x.clone()).collect::<Vec<_>>())?;
    d.set_item("y", states.iter().map(|s| s.y.clone()).collect::<Vec<_>>())?;
    Ok(d)
}

fn fixed_point_dict<'py>(py: Python<'py>, fp: &FixedPoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x_star", fp.x_star.clone())?;
    d.set_item("y_star", fp.y_star.clone())?;
    d.set_item("ell", fp.crossing)?;
    d.set_item("regime", fp.regime.label())?;
    d.set_item("trade_volume", fp.trade_volume)?;
    d.set_item("residual", fp.residual)?;
    d.set_item("iterations", fp.iterations)?;
    d.set_item("solver", fp.solver.to_string())?;
    Ok(d)
}

/// Simulates the scaled chain; returns `tau`, `x`, `y` and `counters`.
#[pyfunction]
#[pyo3(signature = (params, scale, tau_max, sample_dt, seed, x0=None, y0=None, max_events=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    scale: u64,
    tau_max: f64,
    sample_dt: f64,
    seed: u64,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
    max_events: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let init = initial(params, x0, y0)?;
    let scale = ScalingLevel::new(scale).map_err(value_err)?;
    let opts = SimOptions {
        max_events: max_events.unwrap_or(SimOptions::default().max_events),
        ..SimOptions::default()
    };
    let traj = py
        .detach(|| sim::simulate(&params.inner, scale, &init, tau_max, sample_dt, seed, &opts))
        .map_err(|e| match e {
            SimError::BudgetExceeded { .. } => runtime_err(e),
            _ => value_err(e),
        })?;
    let d = path_dict(py, traj.times.clone(), &traj.states)?;
    let c = PyDict::new(py);
    c.set_item("trades", traj.counters.trades.clone())?;
    c.set_item("buyer_quits", traj.counters.buyer_quits.clone())?;
    c.set_item("seller_quits", traj.counters.seller_quits.clone())?;
    c.set_item("buyer_moves", traj.counters.buyer_moves.clone())?;
    c.set_item("seller_moves", traj.counters.seller_moves.clone())?;
    c.set_item("buyer_arrivals", traj.counters.buyer_arrivals)?;
    c.set_item("seller_arrivals", traj.counters.seller_arrivals)?;
    c.set_item("buyer_exit_top", traj.counters.buyer_exit_top)?;
    c.set_item("seller_exit_bottom", traj.counters.seller_exit_bottom)?;
    d.set_item("counters", c)?;
    d.set_item(
        "conserved",
        traj.counters.check_conservation(&traj.initial_state, &traj.final_state).is_ok(),
    )?;
    Ok(d)
}

/// Integrates the fluid ODEs; returns `tau`, `x`, `y` at accepted steps,
/// or on the grid `times` when given.
#[pyfunction]
#[pyo3(signature = (params, tau_max, x0=None, y0=None, tol=ode::DEFAULT_TOL, times=None))]
fn integrate<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    tau_max: f64,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
    tol: f64,
    times: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let init = initial(params, x0, y0)?;
    match times {
        Some(times) => {
            let states = ode::integrate_at(&init, &params.inner, &times, tol).map_err(runtime_err)?;
            path_dict(py, times, &states)
        }
        None => {
            let sol = ode::integrate(&init, &params.inner, tau_max, tol).map_err(runtime_err)?;
            let d = path_dict(py, sol.times.clone(), &sol.states)?;
            d.set_item("error_estimate", sol.error_estimate)?;
            Ok(d)
        }
    }
}

/// Fixed point by `"shooting"` or `"recursive"`.
#[pyfunction]
#[pyo3(signature = (params, method="shooting", tol=1e-14, max_iter=1_000_000))]
fn solve<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    method: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let fp = match method {
        "shooting" => fixed_point::solve_shooting(&params.inner),
        "recursive" => fixed_point::solve_recursive(&params.inner, tol, max_iter),
        other => return Err(value_err(format!("unknown method {other:?}"))),
    }
    .map_err(runtime_err)?;
    fixed_point_dict(py, &fp)
}

/// Image of `(v, w)` at zero-based `level` under the level map.
#[pyfunction]
fn step_map(params: &PyModelParams, v: f64, w: f64, level: usize) -> PyResult<(f64, f64)> {
    let p = BrokenLinePoint::new(v, w, level).map_err(value_err)?;
    let q = fixed_point::step_map(p, &params.inner).map_err(value_err)?;
    Ok((q.v, q.w))
}

/// `(ell, regime)` with regime one of `"i"`, `"ii"`, `"iii"`.
#[pyfunction]
fn classify_regime(x: Vec<f64>, y: Vec<f64>) -> PyResult<(usize, &'static str)> {
    let (ell, regime) = fixed_point::classify_regime(&x, &y).map_err(value_err)?;
    Ok((ell, regime.label()))
}

/// Per-level sup-distances between simulated and fluid paths.
#[pyfunction]
#[pyo3(signature = (params, levels, horizon, replicas, seed, x0=None, y0=None))]
#[allow(clippy::too_many_arguments)]
fn fluid_convergence<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    levels: Vec<u64>,
    horizon: f64,
    replicas: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let init = initial(params, x0, y0)?;
    let rep = py
        .detach(|| {
            experiments::fluid_convergence(
                &params.inner,
                &init,
                &levels,
                horizon,
                replicas,
                seed,
                &ExperimentOptions::default(),
            )
        })
        .map_err(runtime_err)?;
    let d = PyDict::new(py);
    for l in &rep.levels {
        d.set_item(l.scale, l.distances.clone())?;
    }
    Ok(d)
}

/// One dict per swept seller arrival rate.
#[pyfunction]
#[pyo3(signature = (params, lambda_s_values, tol=1e-8))]
fn overproduction_sweep<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    lambda_s_values: Vec<f64>,
    tol: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rep = experiments::overproduction_sweep(&params.inner, &lambda_s_values, tol).map_err(runtime_err)?;
    rep.points
        .iter()
        .map(|pt| {
            let d = PyDict::new(py);
            d.set_item("lambda_s", pt.lambda_s)?;
            d.set_item("ell", pt.crossing)?;
            d.set_item("regime", pt.regime.label())?;
            d.set_item("trade_volume", pt.trade_volume)?;
            d.set_item("residual", pt.residual)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn lobfluid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(step_map, m)?)?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(fluid_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(overproduction_sweep, m)?)?;
    Ok(())
}
