use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lobfluid_core::experiments::{
    equilibrium_concentration, fluid_convergence, overproduction_sweep, ConvergenceReport, ExperimentOptions,
};
use lobfluid_core::fixed_point::{solve_recursive, solve_shooting, FixedPoint};
use lobfluid_core::ode::{integrate, integrate_at, rhs, DEFAULT_TOL};
use lobfluid_core::output;
use lobfluid_core::sim::{sample_grid, simulate, SimOptions};
use lobfluid_core::{FluidState, ModelParams, RawParams, ScalingLevel};
use serde::Serialize;

use crate::config::{self, initial_state, invalid, nonnegative, positive, FileConfig, Method, ModelFlags};
use crate::{CliError, Command, Common};

/// Fixed points with a larger defect are reported as solver failures.
const RESIDUAL_LIMIT: f64 = 1e-8;

struct Context {
    file: FileConfig,
    params: ModelParams,
    seed: u64,
    out_dir: PathBuf,
}

fn context(common: &Common) -> Result<Context, CliError> {
    let file = config::load(common.config.as_deref())?;
    let flags = ModelFlags {
        n: common.n,
        lambda_b: common.lambda_b,
        lambda_s: common.lambda_s,
        alpha: common.alpha,
        beta: common.beta,
        gamma: common.gamma,
    };
    let params = config::resolve_model(&flags, &file.model)?;
    let seed = common.seed.or(file.seed).unwrap_or(config::DEFAULT_SEED);
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT_DIR));
    Ok(Context {
        file,
        params,
        seed,
        out_dir,
    })
}

#[derive(Serialize)]
struct Manifest<'a, S: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    out_dir: &'a Path,
    model: RawParams,
    settings: &'a S,
    outputs: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish<S: Serialize>(mut self, command: &'static str, ctx: &Context, settings: &S) -> Result<(), CliError> {
        self.written.push("manifest.json".into());
        let manifest = Manifest {
            tool: "lobfluid",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: ctx.seed,
            out_dir: &ctx.out_dir,
            model: ctx.params.to_raw(),
            settings,
            outputs: self.written.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

/// `v` rounded to `digits` significant digits.
fn sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - mag;
    if (0..=20).contains(&decimals) {
        format!("{v:.*}", decimals as usize)
    } else {
        format!("{v:.*e}", digits - 1)
    }
}

fn vector(v: &[f64], digits: usize) -> String {
    let parts: Vec<String> = v.iter().map(|c| sig(*c, digits)).collect();
    format!("({})", parts.join(", "))
}

pub(crate) fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            common,
            scale,
            tau_max,
            sample_dt,
            x0,
            y0,
            max_events,
            verify_rates,
        } => {
            let ctx = context(&common)?;
            let f = &ctx.file.simulate;
            let scale = scale.or(f.scale).unwrap_or(1000);
            let tau_max = nonnegative("tau_max", tau_max.or(f.tau_max).unwrap_or(5.0))?;
            let default_dt = if tau_max > 0.0 { tau_max / 100.0 } else { 1.0 };
            let sample_dt = positive("sample_dt", sample_dt.or(f.sample_dt).unwrap_or(default_dt))?;
            let init = initial_state(ctx.params.n_levels(), x0.or(f.x0.clone()), y0.or(f.y0.clone()))?;
            let opts = SimOptions {
                max_events: max_events.or(f.max_events).unwrap_or(SimOptions::default().max_events),
                verify_rates: verify_rates || f.verify_rates.unwrap_or(false),
            };
            let settings = SimulateSettings {
                scale,
                tau_max,
                sample_dt,
                x0: init.x.clone(),
                y0: init.y.clone(),
                max_events: opts.max_events,
                verify_rates: opts.verify_rates,
            };
            cmd_simulate(&ctx, &settings, &init, &opts)
        }
        Command::Integrate {
            common,
            tau_max,
            tol,
            sample_dt,
            x0,
            y0,
        } => {
            let ctx = context(&common)?;
            let f = &ctx.file.integrate;
            let settings = IntegrateSettings {
                tau_max: nonnegative("tau_max", tau_max.or(f.tau_max).unwrap_or(50.0))?,
                tol: positive("tol", tol.or(f.tol).unwrap_or(DEFAULT_TOL))?,
                sample_dt: sample_dt.or(f.sample_dt).map(|d| positive("sample_dt", d)).transpose()?,
                x0: Vec::new(),
                y0: Vec::new(),
            };
            let init = initial_state(ctx.params.n_levels(), x0.or(f.x0.clone()), y0.or(f.y0.clone()))?;
            let settings = IntegrateSettings {
                x0: init.x.clone(),
                y0: init.y.clone(),
                ..settings
            };
            cmd_integrate(&ctx, &settings, &init)
        }
        Command::Solve {
            common,
            method,
            tol,
            max_iter,
        } => {
            let ctx = context(&common)?;
            let f = &ctx.file.solve;
            let settings = SolveSettings {
                method: method.or(f.method).unwrap_or(Method::Both),
                tol: positive("tol", tol.or(f.tol).unwrap_or(1e-14))?,
                max_iter: max_iter.or(f.max_iter).unwrap_or(1_000_000),
                residual_limit: RESIDUAL_LIMIT,
            };
            cmd_solve(&ctx, &settings)
        }
        Command::Converge {
            common,
            levels,
            replicas,
            horizon,
            grid_fraction,
            x0,
            y0,
            max_events,
        } => {
            let ctx = context(&common)?;
            let f = &ctx.file.converge;
            let init = initial_state(ctx.params.n_levels(), x0.or(f.x0.clone()), y0.or(f.y0.clone()))?;
            let settings = ConvergeSettings {
                levels: levels.or(f.levels.clone()).unwrap_or_else(|| vec![10, 100, 1000]),
                replicas: replicas.or(f.replicas).unwrap_or(50),
                horizon: positive("horizon", horizon.or(f.horizon).unwrap_or(5.0))?,
                grid_fraction: positive("grid_fraction", grid_fraction.or(f.grid_fraction).unwrap_or(0.01))?,
                x0: init.x.clone(),
                y0: init.y.clone(),
                max_events: max_events.or(f.max_events).unwrap_or(SimOptions::default().max_events),
            };
            if settings.replicas == 0 {
                return Err(invalid("replicas", "must be at least 1").into());
            }
            check_levels(&settings.levels)?;
            cmd_converge(&ctx, &settings, &init)
        }
        Command::Equilibrium {
            common,
            levels,
            burn_in,
            n_samples,
            sample_gap,
            max_events,
        } => {
            let ctx = context(&common)?;
            let f = &ctx.file.equilibrium;
            let settings = EquilibriumSettings {
                levels: levels.or(f.levels.clone()).unwrap_or_else(|| vec![100, 1000]),
                burn_in: positive("burn_in", burn_in.or(f.burn_in).unwrap_or(20.0))?,
                n_samples: n_samples.or(f.n_samples).unwrap_or(200),
                sample_gap: positive("sample_gap", sample_gap.or(f.sample_gap).unwrap_or(0.5))?,
                max_events: max_events.or(f.max_events).unwrap_or(SimOptions::default().max_events),
            };
            check_levels(&settings.levels)?;
            cmd_equilibrium(&ctx, &settings)
        }
        Command::Sweep {
            common,
            lambda_s_values,
            tol,
        } => {
            let ctx = context(&common)?;
            let f = &ctx.file.sweep;
            let settings = SweepSettings {
                lambda_s_values: lambda_s_values
                    .or(f.lambda_s_values.clone())
                    .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]),
                tol: positive("tol", tol.or(f.tol).unwrap_or(RESIDUAL_LIMIT))?,
            };
            let v = &settings.lambda_s_values;
            if v.is_empty() || v.windows(2).any(|w| !(w[0] < w[1])) || v.iter().any(|x| !(*x > 0.0)) {
                return Err(invalid("lambda_s_values", "must be non-empty, positive and strictly increasing").into());
            }
            cmd_sweep(&ctx, &settings)
        }
    }
}

fn check_levels(levels: &[u64]) -> Result<(), CliError> {
    if levels.is_empty() || levels.contains(&0) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("levels", "must be non-empty, >= 1 and strictly increasing").into());
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSettings {
    scale: u64,
    tau_max: f64,
    sample_dt: f64,
    x0: Vec<f64>,
    y0: Vec<f64>,
    max_events: u64,
    verify_rates: bool,
}

fn cmd_simulate(ctx: &Context, s: &SimulateSettings, init: &FluidState, opts: &SimOptions) -> Result<(), CliError> {
    let scale = ScalingLevel::new(s.scale).map_err(|e| invalid("scale", e.to_string()))?;
    let traj = simulate(&ctx.params, scale, init, s.tau_max, s.sample_dt, ctx.seed, opts)?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write("trajectory.csv", |w| output::write_states_csv(w, &traj.times, &traj.states))?;
    out.write("counters.csv", |w| output::write_counters_csv(w, &traj.counters))?;
    out.finish("simulate", ctx, s)?;

    let c = &traj.counters;
    let last = traj.states.last().expect("grid has at least one point");
    println!(
        "simulated L = {} on [0, {}] with seed {}: {} events",
        s.scale,
        s.tau_max,
        ctx.seed,
        c.total_events()
    );
    println!(
        "  arrivals {}/{} (buyers/sellers), trades {}, boundary exits {}/{}",
        c.buyer_arrivals,
        c.seller_arrivals,
        c.trades.iter().sum::<u64>(),
        c.buyer_exit_top,
        c.seller_exit_bottom
    );
    println!("  final x = {}", vector(&last.x, 6));
    println!("  final y = {}", vector(&last.y, 6));
    println!("  outputs written to {}", ctx.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct IntegrateSettings {
    tau_max: f64,
    tol: f64,
    sample_dt: Option<f64>,
    x0: Vec<f64>,
    y0: Vec<f64>,
}

fn cmd_integrate(ctx: &Context, s: &IntegrateSettings, init: &FluidState) -> Result<(), CliError> {
    let (times, states, detail) = match s.sample_dt {
        Some(dt) => {
            let grid = sample_grid(s.tau_max, dt);
            let states = integrate_at(init, &ctx.params, &grid, s.tol)?;
            (grid, states, String::new())
        }
        None => {
            let sol = integrate(init, &ctx.params, s.tau_max, s.tol)?;
            let detail = format!(
                "  {} accepted / {} rejected steps, error estimate {:.3e}\n",
                sol.accepted_steps, sol.rejected_steps, sol.error_estimate
            );
            (sol.times, sol.states, detail)
        }
    };
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write("trajectory.csv", |w| output::write_states_csv(w, &times, &states))?;
    out.finish("integrate", ctx, s)?;

    let last = states.last().expect("solution has at least one point");
    let (dx, dy) = rhs(last, &ctx.params);
    let norm = dx.iter().chain(&dy).fold(0.0f64, |m, v| m.max(v.abs()));
    println!("integrated on [0, {}] with tol {:e}", s.tau_max, s.tol);
    print!("{detail}");
    println!("  final x = {}", vector(&last.x, 10));
    println!("  final y = {}", vector(&last.y, 10));
    println!("  |rhs| at end = {norm:.3e}");
    println!("  outputs written to {}", ctx.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SolveSettings {
    method: Method,
    tol: f64,
    max_iter: usize,
    residual_limit: f64,
}

fn cmd_solve(ctx: &Context, s: &SolveSettings) -> Result<(), CliError> {
    let mut solved: Vec<FixedPoint> = Vec::new();
    if matches!(s.method, Method::Shooting | Method::Both) {
        solved.push(solve_shooting(&ctx.params)?);
    }
    if matches!(s.method, Method::Recursive | Method::Both) {
        solved.push(solve_recursive(&ctx.params, s.tol, s.max_iter)?);
    }
    for fp in &solved {
        if !(fp.residual < s.residual_limit) {
            return Err(CliError::Solver(format!(
                "{} solution has residual {:e} above {:e}",
                fp.solver, fp.residual, s.residual_limit
            )));
        }
    }
    let mut out = Outputs::new(&ctx.out_dir)?;
    for fp in &solved {
        out.write(&format!("fixed_point_{}.csv", fp.solver), |w| {
            output::write_fixed_point_csv(w, fp, ctx.params.gamma())
        })?;
    }
    out.write("fixed_point_summary.csv", |w| output::write_fixed_point_summary_csv(w, &solved))?;
    out.finish("solve", ctx, s)?;

    for fp in &solved {
        println!("{} solver ({} iterations):", fp.solver, fp.iterations);
        println!("  x* = {}", vector(&fp.x_star, 10));
        println!("  y* = {}", vector(&fp.y_star, 10));
        println!(
            "  ell = {}, regime {}, trade volume {}, residual {:.3e}",
            fp.crossing,
            fp.regime,
            sig(fp.trade_volume, 10),
            fp.residual
        );
        if !fp.tied_levels.is_empty() {
            let levels: Vec<String> = fp.tied_levels.iter().map(|k| (k + 1).to_string()).collect();
            println!("  tie x* = y* at level(s) {}", levels.join(", "));
        }
    }
    if let [a, b] = solved.as_slice() {
        println!("solvers agree to {:.3e} (sup norm)", a.distance(b));
    }
    println!("outputs written to {}", ctx.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct ConvergeSettings {
    levels: Vec<u64>,
    replicas: usize,
    horizon: f64,
    grid_fraction: f64,
    x0: Vec<f64>,
    y0: Vec<f64>,
    max_events: u64,
}

fn print_levels(report: &ConvergenceReport) {
    println!("  {:>8} {:>12} {:>12} {:>12}", "L", "q25", "median", "q75");
    for l in &report.levels {
        match l.quantiles {
            Some(q) => println!(
                "  {:>8} {:>12} {:>12} {:>12}",
                l.scale,
                sig(q.q25, 5),
                sig(q.median, 5),
                sig(q.q75, 5)
            ),
            None => println!("  {:>8} {:>12}", l.scale, "no samples"),
        }
    }
}

fn cmd_converge(ctx: &Context, s: &ConvergeSettings, init: &FluidState) -> Result<(), CliError> {
    let opts = ExperimentOptions {
        grid_fraction: s.grid_fraction,
        sim: SimOptions {
            max_events: s.max_events,
            ..SimOptions::default()
        },
        ..ExperimentOptions::default()
    };
    let report = fluid_convergence(&ctx.params, init, &s.levels, s.horizon, s.replicas, ctx.seed, &opts)?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write("convergence.csv", |w| output::write_convergence_csv(w, &report))?;
    out.finish("converge", ctx, s)?;

    println!(
        "sup distance to the fluid path on [0, {}], {} replicas per level, seed {}:",
        s.horizon, s.replicas, ctx.seed
    );
    print_levels(&report);
    println!("outputs written to {}", ctx.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EquilibriumSettings {
    levels: Vec<u64>,
    burn_in: f64,
    n_samples: usize,
    sample_gap: f64,
    max_events: u64,
}

fn cmd_equilibrium(ctx: &Context, s: &EquilibriumSettings) -> Result<(), CliError> {
    let opts = ExperimentOptions {
        sim: SimOptions {
            max_events: s.max_events,
            ..SimOptions::default()
        },
        ..ExperimentOptions::default()
    };
    let report = equilibrium_concentration(&ctx.params, &s.levels, s.burn_in, s.n_samples, s.sample_gap, ctx.seed, &opts)?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write("equilibrium.csv", |w| output::write_equilibrium_csv(w, &report))?;
    out.finish("equilibrium", ctx, s)?;

    if let Some(r) = &report.reference {
        println!("fixed point x* = {}, y* = {}", vector(&r.x, 10), vector(&r.y, 10));
    }
    println!(
        "distance of {} samples (burn-in {}, gap {}) from the fixed point, seed {}:",
        s.n_samples, s.burn_in, s.sample_gap, ctx.seed
    );
    print_levels(&report);
    println!("outputs written to {}", ctx.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepSettings {
    lambda_s_values: Vec<f64>,
    tol: f64,
}

fn cmd_sweep(ctx: &Context, s: &SweepSettings) -> Result<(), CliError> {
    let report = overproduction_sweep(&ctx.params, &s.lambda_s_values, s.tol)?;
    let mut out = Outputs::new(&ctx.out_dir)?;
    out.write("sweep.csv", |w| output::write_sweep_csv(w, &report))?;
    out.finish("sweep", ctx, s)?;

    println!("  {:>10} {:>5} {:>7} {:>16}", "lambda_s", "ell", "regime", "trade volume");
    for p in &report.points {
        println!(
            "  {:>10} {:>5} {:>7} {:>16}",
            sig(p.lambda_s, 6),
            p.crossing,
            p.regime.to_string(),
            sig(p.trade_volume, 12)
        );
    }
    match report.saturation_onset {
        Some(v) => println!("saturation onset (first lambda_s with ell = 0): {}", sig(v, 10)),
        None => println!("no saturation on this grid"),
    }
    println!("outputs written to {}", ctx.out_dir.display());
    Ok(())
}
