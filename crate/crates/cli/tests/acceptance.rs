//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lobfluid_core::experiments::{equilibrium_concentration, fluid_convergence, overproduction_sweep, ExperimentOptions};
use lobfluid_core::fixed_point::{
    classify_regime, map_jacobian_check, slope_bound_check, solve_recursive, solve_shooting, BrokenLinePoint,
    FixedPoint, FixedPointError, MapCase, Regime,
};
use lobfluid_core::ode::{
    check_comparison, extremal_initial_conditions, integrate, integrate_to_rest, monotonicity_defect, Monotonicity,
    DEFAULT_TOL,
};
use lobfluid_core::sim::{simulate, SimOptions};
use lobfluid_core::{FluidState, ModelParams, ScalingLevel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.1f64.ln()..10f64.ln()).exp()
}

fn random_params(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> ModelParams {
    let n = rng.random_range(min_n..=max_n);
    let (lb, ls, a, b, g) = (
        log_uniform(rng),
        log_uniform(rng),
        log_uniform(rng),
        log_uniform(rng),
        log_uniform(rng),
    );
    ModelParams::new(n, lb, ls, a, b, g).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, hi: f64) -> FluidState {
    FluidState::new(
        (0..n).map(|_| rng.random_range(0.0..hi)).collect(),
        (0..n).map(|_| rng.random_range(0.0..hi)).collect(),
    )
    .unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn both_solvers(p: &ModelParams) -> Result<[FixedPoint; 2], String> {
    let a = solve_shooting(p).map_err(|e| format!("shooting: {e}"))?;
    let b = solve_recursive(p, 1e-14, 1_000_000).map_err(|e| format!("recursive: {e}"))?;
    Ok([a, b])
}

/// Fixed points gathered over the analytic cases and a random sweep.
fn fixed_point_corpus() -> Result<Vec<(ModelParams, FixedPoint)>, String> {
    let mut params = vec![
        ModelParams::unit(1).unwrap(),
        ModelParams::new(1, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
        ModelParams::unit(2).unwrap(),
        ModelParams::new(2, 1e-3, 1.0, 1.0, 1.0, 1.0).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    params.extend((0..300).map(|_| random_params(&mut rng, 1, 10)));
    for ls in [0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
        params.push(ModelParams::new(3, 1.0, ls, 1.0, 1.0, 1.0).unwrap());
    }
    let mut out = Vec::new();
    for p in params {
        for fp in both_solvers(&p)? {
            out.push((p.clone(), fp));
        }
    }
    Ok(out)
}

fn c1_analytic() -> Outcome {
    let start = Instant::now();
    let cases = [
        (ModelParams::unit(1).unwrap(), vec![1.0 / 3.0], vec![1.0 / 3.0]),
        (ModelParams::new(1, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap(), vec![5.0 / 6.0], vec![1.0 / 3.0]),
        (ModelParams::unit(2).unwrap(), vec![3.0 / 7.0, 1.0 / 7.0], vec![1.0 / 7.0, 3.0 / 7.0]),
    ];
    let mut worst = 0.0f64;
    for (p, x, y) in &cases {
        for fp in both_solvers(p)? {
            let err = sup_diff(&fp.x_star, x).max(sup_diff(&fp.y_star, y));
            if !(err < 1e-10) {
                return Err(format!("{} solver off by {err:e} at N = {}", fp.solver, p.n_levels()));
            }
            worst = worst.max(err);
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("3 cases x 2 solvers, max error {worst:.1e} ({:.2?})", start.elapsed()))
}

fn c2_triple_agreement() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let p = random_params(&mut rng, 1, 10);
        let [a, b] = both_solvers(&p)?;
        let run = integrate_to_rest(&FluidState::zeros(p.n_levels()), &p, 1e-11, 1e6).map_err(|e| e.to_string())?;
        if !run.converged {
            return Err(format!("case {case}: ODE did not come to rest (|rhs| = {:e})", run.rhs_norm));
        }
        let ode = run.state.to_vec();
        let d = [
            a.distance(&b),
            sup_diff(&ode, &a.as_fluid_state().to_vec()),
            sup_diff(&ode, &b.as_fluid_state().to_vec()),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if !(d < 1e-6) {
            return Err(format!("case {case}: pairwise distance {d:e}"));
        }
        worst = worst.max(d);
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("100 draws, max pairwise distance {worst:.1e} ({:.2?})", start.elapsed()))
}

fn c3_residual(corpus: &[(ModelParams, FixedPoint)]) -> Outcome {
    let worst = corpus.iter().map(|(_, fp)| fp.residual).fold(0.0, f64::max);
    if worst < 1e-8 {
        Ok(format!("{} fixed points, max residual {worst:.1e}", corpus.len()))
    } else {
        Err(format!("max residual {worst:e}"))
    }
}

fn c4_ordering(corpus: &[(ModelParams, FixedPoint)]) -> Outcome {
    let mut counts = [0usize; 3];
    for (p, fp) in corpus {
        if !fp.strictly_ordered() {
            return Err(format!("not strictly ordered: {fp:?}"));
        }
        let n = p.n_levels();
        let ell = fp.crossing;
        if (0..n).any(|k| (fp.x_star[k] > fp.y_star[k]) != (k < ell)) {
            return Err(format!("more than one sign change: {fp:?}"));
        }
        let (ell2, regime) = classify_regime(&fp.x_star, &fp.y_star).map_err(|e| e.to_string())?;
        let expected = if ell == n {
            Regime::BuyersEverywhere
        } else if ell == 0 {
            Regime::SellersEverywhere
        } else {
            Regime::Crossing
        };
        if ell2 != ell || regime != fp.regime || regime != expected {
            return Err(format!("regime label mismatch: {fp:?}"));
        }
        counts[match regime {
            Regime::BuyersEverywhere => 0,
            Regime::SellersEverywhere => 1,
            Regime::Crossing => 2,
        }] += 1;
    }
    Ok(format!(
        "{} fixed points, regimes (i)/(ii)/(iii) = {}/{}/{}",
        corpus.len(),
        counts[0],
        counts[1],
        counts[2]
    ))
}

fn c5_comparison() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let p = random_params(&mut rng, 1, 6);
        let n = p.n_levels();
        let lower = random_state(&mut rng, n, 2.0);
        let mut upper = lower.clone();
        for k in 0..n {
            if rng.random_bool(0.7) {
                upper.x[k] += rng.random_range(0.0..1.0);
            }
            if rng.random_bool(0.7) {
                upper.y[k] = (upper.y[k] - rng.random_range(0.0..1.0)).max(0.0);
            }
        }
        let tau = rng.random_range(1.0..=50.0);
        let rep = check_comparison(&lower, &upper, &p, tau, 1e-8).map_err(|e| e.to_string())?;
        if !rep.holds() {
            return Err(format!("case {case}: ordering broken by {:e}", rep.max_violation));
        }
        worst = worst.max(rep.max_violation);
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("200 pairs, largest reversal {worst:.1e} ({:.2?})", start.elapsed()))
}

fn c6_monotone_extremes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let p = random_params(&mut rng, 1, 5);
        let mid = random_state(&mut rng, p.n_levels(), 3.0);
        let (lower, upper) = extremal_initial_conditions(&mid, &p);
        let tau = rng.random_range(1.0..=50.0);
        // overshoot is O(tol); integrate well below the default tolerance
        let lo = integrate(&lower, &p, tau, DEFAULT_TOL / 100.0).map_err(|e| e.to_string())?;
        let hi = integrate(&upper, &p, tau, DEFAULT_TOL / 100.0).map_err(|e| e.to_string())?;
        let d = monotonicity_defect(&lo, Monotonicity::BuyersUp).max(monotonicity_defect(&hi, Monotonicity::BuyersDown));
        if d > DEFAULT_TOL {
            return Err(format!("case {case}: monotonicity defect {d:e} above {DEFAULT_TOL:e}"));
        }
        worst = worst.max(d);
    }
    Ok(format!("100 cases, largest step against the trend {worst:.1e}"))
}

fn c7_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let opts = SimOptions {
        verify_rates: true,
        ..SimOptions::default()
    };
    let mut events = 0u64;
    for case in 0..1000u64 {
        let p = random_params(&mut rng, 1, 6);
        let l = ScalingLevel::new(rng.random_range(1..=50)).unwrap();
        let init = random_state(&mut rng, p.n_levels(), 2.0);
        let tau = rng.random_range(0.0..0.5);
        let traj = simulate(&p, l, &init, tau, 0.05, case, &opts).map_err(|e| e.to_string())?;
        traj.counters
            .check_conservation(&traj.initial_state, &traj.final_state)
            .map_err(|v| format!("case {case}: {v:?}"))?;
        events += traj.counters.total_events();
    }
    Ok(format!("1000 runs, {events} events, zero mismatches"))
}

fn c8_fluid_limit() -> Outcome {
    let start = Instant::now();
    let rep = fluid_convergence(
        &ModelParams::unit(1).unwrap(),
        &FluidState::zeros(1),
        &[10, 100, 1000],
        5.0,
        50,
        20240501,
        &ExperimentOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let m: Vec<f64> = rep.medians().into_iter().map(|m| m.unwrap()).collect();
    within(start.elapsed(), Duration::from_secs(300))?;
    let text = format!("medians {:.4} > {:.4} > {:.4} ({:.2?})", m[0], m[1], m[2], start.elapsed());
    if m[0] > m[1] && m[1] > m[2] && m[2] < 0.1 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn c9_equilibrium() -> Outcome {
    let start = Instant::now();
    let rep = equilibrium_concentration(&ModelParams::unit(2).unwrap(), &[1000], 20.0, 200, 0.5, 9009, &ExperimentOptions::default())
        .map_err(|e| e.to_string())?;
    let reference = rep.reference.as_ref().unwrap().to_vec();
    let hand = [3.0 / 7.0, 1.0 / 7.0, 1.0 / 7.0, 3.0 / 7.0];
    if sup_diff(&reference, &hand) > 1e-12 {
        return Err(format!("reference point {reference:?}"));
    }
    let median = rep.medians()[0].unwrap();
    within(start.elapsed(), Duration::from_secs(300))?;
    let text = format!("median distance {median:.4} at L = 1000 ({:.2?})", start.elapsed());
    if median < 0.1 {
        Ok(text)
    } else {
        Err(text)
    }
}

fn c10_saturation() -> Outcome {
    let p = ModelParams::unit(3).unwrap();
    let grid: Vec<f64> = (0..=40).map(|i| 0.25 * 80f64.powf(i as f64 / 40.0)).collect();
    let first = overproduction_sweep(&p, &grid, 1e-8).map_err(|e| e.to_string())?;
    let second = overproduction_sweep(&p, &grid, 1e-8).map_err(|e| e.to_string())?;
    if first.saturation_onset != second.saturation_onset || first != second {
        return Err("sweep differs between reruns".into());
    }
    let onset = first.saturation_onset.ok_or("no saturation on the grid")?;
    let flat: Vec<f64> = first
        .points
        .iter()
        .filter(|pt| pt.regime == Regime::SellersEverywhere)
        .map(|pt| pt.trade_volume)
        .collect();
    let v0 = flat[0];
    let spread = flat.iter().map(|v| (v - v0).abs() / v0).fold(0.0, f64::max);
    if spread > 1e-9 {
        return Err(format!("regime (ii) volume varies by {spread:e}"));
    }
    Ok(format!(
        "{} of {} points in regime (ii), relative spread {spread:.1e}, onset lambda_S = {onset:.6}",
        flat.len(),
        grid.len()
    ))
}

fn c11_slopes() -> Outcome {
    let unit = ModelParams::unit(2).unwrap();
    let mid = map_jacobian_check(BrokenLinePoint::new(3.0 / 7.0, 1.0 / 7.0, 0).unwrap(), (1.0, -1.0), &unit, 1e-7)
        .map_err(|e| e.to_string())?;
    if mid.case != MapCase::Crossing || (mid.numeric_factor - 9.0).abs() > 9e-6 {
        return Err(format!("middle case at unit rates: {mid:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut seen = [0usize; 3];
    let mut worst = mid.relative_difference;
    for _ in 0..30 {
        let p = random_params(&mut rng, 2, 2);
        for _ in 0..200 {
            let pt = BrokenLinePoint::new(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0), 0).unwrap();
            let tangent = (1.0, -rng.random_range(0.1..5.0));
            match map_jacobian_check(pt, tangent, &p, 1e-6) {
                Ok(rep) => {
                    if !(rep.relative_difference < 1e-6) {
                        return Err(format!("{rep:?}"));
                    }
                    worst = worst.max(rep.relative_difference);
                    seen[match rep.case {
                        MapCase::BuyerHeavyBoth => 0,
                        MapCase::Crossing => 1,
                        MapCase::SellerHeavyBoth => 2,
                    }] += 1;
                }
                Err(FixedPointError::OnKink) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    if seen.iter().any(|&c| c == 0) {
        return Err(format!("case counts {seen:?}"));
    }
    let mut checked = 0;
    for _ in 0..50 {
        let p = random_params(&mut rng, 2, 8);
        let rep = slope_bound_check(&p, 400, 1e-7);
        if rep.violations > 0 {
            return Err(format!("slope bound violated: {rep:?}"));
        }
        checked += rep.checked;
    }
    Ok(format!(
        "case samples {}/{}/{}, max relative difference {worst:.1e}; slope bound held at {checked} samples",
        seen[0], seen[1], seen[2]
    ))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lobfluid"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = [
        "--n", "2", "--alpha", "1", "--beta", "1", "--gamma", "1", "--lambda-b", "1", "--lambda-s", "1", "--seed", "42",
    ];
    let commands: [&[&str]; 6] = [
        &["simulate", "--scale", "300", "--tau-max", "3"],
        &["integrate", "--tau-max", "20"],
        &["solve", "--method", "both"],
        &["converge", "--levels", "10,100", "--replicas", "8", "--horizon", "2"],
        &["equilibrium", "--levels", "50,200", "--burn-in", "5", "--n-samples", "40"],
        &["sweep", "--lambda-s-values", "0.5,1,2,5,10"],
    ];
    let mut compared = 0;
    for cmd in commands {
        for run in ["a", "b"] {
            let out_dir = format!("{}-{run}", cmd[0]);
            let mut args = cmd.to_vec();
            args.extend(model);
            args.extend(["--out-dir", &out_dir]);
            run_cli(&args, dir.path())?;
        }
        let a = dir.path().join(format!("{}-a", cmd[0]));
        let b = dir.path().join(format!("{}-b", cmd[0]));
        let mut names: Vec<_> = fs::read_dir(&a)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(format!("{} wrote no CSV", cmd[0]));
        }
        for name in names {
            let x = fs::read(a.join(&name)).map_err(|e| e.to_string())?;
            let y = fs::read(b.join(&name)).map_err(|e| e.to_string())?;
            if x != y {
                return Err(format!("{}: {name} differs between runs", cmd[0]));
            }
            compared += 1;
        }
    }
    Ok(format!("6 subcommands, {compared} CSV files byte-identical across reruns"))
}

fn main() {
    let corpus = fixed_point_corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("analytic fixed points", Box::new(c1_analytic)),
        ("solver/solver/ODE agreement", Box::new(c2_triple_agreement)),
        ("stationary-equation residual", Box::new(|| c3_residual(corpus.as_ref().map_err(Clone::clone)?))),
        ("ordering and regimes", Box::new(|| c4_ordering(corpus.as_ref().map_err(Clone::clone)?))),
        ("order preservation of the flow", Box::new(c5_comparison)),
        ("monotone extremal solutions", Box::new(c6_monotone_extremes)),
        ("counter conservation", Box::new(c7_conservation)),
        ("fluid limit at desk scale", Box::new(c8_fluid_limit)),
        ("equilibrium concentration", Box::new(c9_equilibrium)),
        ("overproduction saturation", Box::new(c10_saturation)),
        ("level-map slopes", Box::new(c11_slopes)),
        ("CLI determinism", Box::new(c12_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
