//! CSV writers. Reals are written with 17 significant digits.

use std::io::{self, Write};

use crate::experiments::{ConvergenceReport, SweepReport};
use crate::fixed_point::FixedPoint;
use crate::sim::EventCounters;
use crate::state::FluidState;

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// `tau, x_1..x_N, y_1..y_N`, one row per time point.
pub fn write_states_csv<W: Write>(w: W, times: &[f64], states: &[FluidState]) -> io::Result<()> {
    let mut out = writer(w);
    let n = states.first().map_or(0, |s| s.n_levels());
    let mut header = vec!["tau".to_string()];
    header.extend((1..=n).map(|k| format!("x_{k}")));
    header.extend((1..=n).map(|k| format!("y_{k}")));
    out.write_record(&header)?;
    for (t, s) in times.iter().zip(states) {
        let mut row = vec![fmt_real(*t)];
        row.extend(s.x.iter().chain(&s.y).map(|v| fmt_real(*v)));
        out.write_record(&row)?;
    }
    out.flush()
}

/// Per-level event counts plus the four boundary totals as trailing rows.
pub fn write_counters_csv<W: Write>(w: W, c: &EventCounters) -> io::Result<()> {
    let mut out = writer(w);
    out.write_record([
        "level",
        "trades",
        "buyer_quits",
        "seller_quits",
        "buyer_moves_up",
        "seller_moves_down",
    ])?;
    for k in 0..c.trades.len() {
        out.write_record([
            (k + 1).to_string(),
            c.trades[k].to_string(),
            c.buyer_quits[k].to_string(),
            c.seller_quits[k].to_string(),
            c.buyer_moves[k].to_string(),
            c.seller_moves[k].to_string(),
        ])?;
    }
    out.flush()?;
    let mut raw = out.into_inner().map_err(|e| e.into_error())?;
    writeln!(raw, "# buyer_arrivals={}", c.buyer_arrivals)?;
    writeln!(raw, "# seller_arrivals={}", c.seller_arrivals)?;
    writeln!(raw, "# buyer_exit_top={}", c.buyer_exit_top)?;
    writeln!(raw, "# seller_exit_bottom={}", c.seller_exit_bottom)?;
    Ok(())
}

/// `level, x_star, y_star, min, cum_trade_volume`.
pub fn write_fixed_point_csv<W: Write>(w: W, fp: &FixedPoint, gamma: f64) -> io::Result<()> {
    let mut out = writer(w);
    out.write_record(["level", "x_star", "y_star", "min", "cum_trade_volume"])?;
    let mut cum = 0.0;
    for (k, (x, y)) in fp.x_star.iter().zip(&fp.y_star).enumerate() {
        let m = x.min(*y);
        cum += gamma * m;
        out.write_record([(k + 1).to_string(), fmt_real(*x), fmt_real(*y), fmt_real(m), fmt_real(cum)])?;
    }
    out.flush()
}

/// One summary row per solver run.
pub fn write_fixed_point_summary_csv<W: Write>(w: W, fps: &[FixedPoint]) -> io::Result<()> {
    let mut out = writer(w);
    out.write_record(["solver", "ell", "regime", "residual", "iterations", "trade_volume"])?;
    for fp in fps {
        out.write_record([
            fp.solver.to_string(),
            fp.crossing.to_string(),
            fp.regime.label().to_string(),
            fmt_real(fp.residual),
            fp.iterations.to_string(),
            fmt_real(fp.trade_volume),
        ])?;
    }
    out.flush()
}

/// `L, replica, seed, sup_dist`.
pub fn write_convergence_csv<W: Write>(w: W, report: &ConvergenceReport) -> io::Result<()> {
    let mut out = writer(w);
    out.write_record(["L", "replica", "seed", "sup_dist"])?;
    for level in &report.levels {
        for (r, (seed, d)) in level.seeds.iter().zip(&level.distances).enumerate() {
            out.write_record([level.scale.to_string(), r.to_string(), seed.to_string(), fmt_real(*d)])?;
        }
    }
    out.flush()
}

/// `L, sample_idx, dist`.
pub fn write_equilibrium_csv<W: Write>(w: W, report: &ConvergenceReport) -> io::Result<()> {
    let mut out = writer(w);
    out.write_record(["L", "sample_idx", "dist"])?;
    for level in &report.levels {
        for (i, d) in level.distances.iter().enumerate() {
            out.write_record([level.scale.to_string(), i.to_string(), fmt_real(*d)])?;
        }
    }
    out.flush()
}

/// `lambda_s, ell, regime, trade_volume, residual`.
pub fn write_sweep_csv<W: Write>(w: W, report: &SweepReport) -> io::Result<()> {
    let mut out = writer(w);
    out.write_record(["lambda_s", "ell", "regime", "trade_volume", "residual"])?;
    for p in &report.points {
        out.write_record([
            fmt_real(p.lambda_s),
            p.crossing.to_string(),
            p.regime.label().to_string(),
            fmt_real(p.trade_volume),
            fmt_real(p.residual),
        ])?;
    }
    out.flush()
}
