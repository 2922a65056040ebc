//! Exact event-driven simulation of the order book chain.
//!
//! One exponential clock over the total rate, then a categorical draw over
//! the events in canonical order (see [`crate::events`]). Each step draws
//! the holding time first and the event second. The simulator keeps a rate
//! table per level and only refreshes the levels touched by the last event.

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;
use thiserror::Error;

use crate::events::{
    apply_event_in_place, enumerate_events, slot_kind, touched_levels, Event, EventKind,
    ScaledRates, SLOTS_PER_LEVEL,
};
use crate::params::{ModelParams, ScalingLevel};
use crate::rng::rng_from_seed;
use crate::state::{scale_state, DiscreteState, FluidState, StateError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event budget of {cap} events exhausted")]
    BudgetExceeded { cap: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Safety cap on the number of events in one run.
    pub max_events: u64,
    /// Recompute the full event list after every event and assert it
    /// equals the incrementally maintained table.
    pub verify_rates: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_events: 1_000_000_000,
            verify_rates: false,
        }
    }
}

/// Cumulative event counts over a simulation window.
///
/// All vectors have one entry per level. `buyer_moves[k]` counts moves
/// k -> k+1 and is always zero at the top level (those are
/// `buyer_exit_top`); `seller_moves[k]` counts moves k -> k-1 and is always
/// zero at level 0 (those are `seller_exit_bottom`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventCounters {
    pub trades: Vec<u64>,
    pub buyer_quits: Vec<u64>,
    pub seller_quits: Vec<u64>,
    pub buyer_moves: Vec<u64>,
    pub seller_moves: Vec<u64>,
    pub buyer_arrivals: u64,
    pub seller_arrivals: u64,
    pub buyer_exit_top: u64,
    pub seller_exit_bottom: u64,
}

/// First level/side at which the bookkeeping identity fails.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("conservation fails for {side} at level {level}: expected {expected}, found {found}")]
pub struct ConservationViolation {
    pub side: &'static str,
    pub level: usize,
    pub expected: i128,
    pub found: i128,
}

impl EventCounters {
    pub fn new(n: usize) -> Self {
        Self {
            trades: vec![0; n],
            buyer_quits: vec![0; n],
            seller_quits: vec![0; n],
            buyer_moves: vec![0; n],
            seller_moves: vec![0; n],
            buyer_arrivals: 0,
            seller_arrivals: 0,
            buyer_exit_top: 0,
            seller_exit_bottom: 0,
        }
    }

    pub fn record(&mut self, kind: EventKind) {
        match kind {
            EventKind::BuyerArrival => self.buyer_arrivals += 1,
            EventKind::SellerArrival => self.seller_arrivals += 1,
            EventKind::Trade(k) => self.trades[k] += 1,
            EventKind::BuyerQuit(k) => self.buyer_quits[k] += 1,
            EventKind::SellerQuit(k) => self.seller_quits[k] += 1,
            EventKind::BuyerMove(k) => self.buyer_moves[k] += 1,
            EventKind::SellerMove(k) => self.seller_moves[k] += 1,
            EventKind::BuyerExitTop => self.buyer_exit_top += 1,
            EventKind::SellerExitBottom => self.seller_exit_bottom += 1,
        }
    }

    pub fn total_events(&self) -> u64 {
        [
            &self.trades,
            &self.buyer_quits,
            &self.seller_quits,
            &self.buyer_moves,
            &self.seller_moves,
        ]
        .iter()
        .flat_map(|v| v.iter())
        .sum::<u64>()
            + self.buyer_arrivals
            + self.seller_arrivals
            + self.buyer_exit_top
            + self.seller_exit_bottom
    }

    /// Checks the per-level increment identities
    ///
    /// `b_k(t') = b_k(t) + inflow_k - n_k - i_m[k] - i_q[k]` and the mirrored
    /// seller identity, with arrivals as inflow at the entry level and the
    /// boundary exits as outflow at the far level. Exact integer arithmetic.
    pub fn check_conservation(
        &self,
        initial: &DiscreteState,
        fin: &DiscreteState,
    ) -> Result<(), ConservationViolation> {
        let n = initial.n_levels();
        let c = |v: u64| v as i128;
        for k in 0..n {
            let inflow = if k == 0 {
                c(self.buyer_arrivals)
            } else {
                c(self.buyer_moves[k - 1])
            };
            let up = if k + 1 == n {
                c(self.buyer_exit_top)
            } else {
                c(self.buyer_moves[k])
            };
            let expected =
                c(initial.b[k]) + inflow - c(self.trades[k]) - up - c(self.buyer_quits[k]);
            if expected != c(fin.b[k]) {
                return Err(ConservationViolation {
                    side: "buyers",
                    level: k,
                    expected,
                    found: c(fin.b[k]),
                });
            }

            let inflow = if k + 1 == n {
                c(self.seller_arrivals)
            } else {
                c(self.seller_moves[k + 1])
            };
            let down = if k == 0 {
                c(self.seller_exit_bottom)
            } else {
                c(self.seller_moves[k])
            };
            let expected =
                c(initial.s[k]) + inflow - c(self.trades[k]) - down - c(self.seller_quits[k]);
            if expected != c(fin.s[k]) {
                return Err(ConservationViolation {
                    side: "sellers",
                    level: k,
                    expected,
                    found: c(fin.s[k]),
                });
            }
        }
        Ok(())
    }
}

/// Scaled sample path of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Scaled sample times, strictly increasing.
    pub times: Vec<f64>,
    pub states: Vec<FluidState>,
    pub initial_state: DiscreteState,
    pub final_state: DiscreteState,
    pub counters: EventCounters,
    pub seed: u64,
    pub scale: ScalingLevel,
}

impl Trajectory {
    /// Largest population seen at a sample point, in discrete units.
    pub fn max_sampled_population(&self) -> u64 {
        let l = self.scale.as_f64();
        self.states
            .iter()
            .map(|st| (st.x.iter().chain(&st.y).sum::<f64>() * l).round() as u64)
            .max()
            .unwrap_or(0)
    }
}

/// Outcome of a single chain transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub event: Event,
    pub holding_time: f64,
    pub next: DiscreteState,
}

fn draw_holding<R: Rng + ?Sized>(rng: &mut R, total: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / total
}

/// One exact transition from `state`.
pub fn step<R: Rng + ?Sized>(
    state: &DiscreteState,
    params: &ModelParams,
    scale: ScalingLevel,
    rng: &mut R,
) -> StepOutcome {
    let events = enumerate_events(state, params, scale);
    let total: f64 = events.iter().map(|e| e.rate).sum();
    let holding_time = draw_holding(rng, total);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = *events.last().expect("arrivals are always enabled");
    for e in &events {
        acc += e.rate;
        if target < acc {
            chosen = *e;
            break;
        }
    }
    let mut next = state.clone();
    apply_event_in_place(&mut next, chosen.kind).expect("enumerated events are enabled");
    StepOutcome {
        event: chosen,
        holding_time,
        next,
    }
}

/// Rates of every slot, including disabled ones, kept in canonical order.
struct RateTable {
    lambda_b: f64,
    lambda_s: f64,
    rates: ScaledRates,
    slots: Vec<f64>,
}

impl RateTable {
    fn new(params: &ModelParams, scale: ScalingLevel, state: &DiscreteState) -> Self {
        let n = state.n_levels();
        let mut table = Self {
            lambda_b: params.lambda_b(),
            lambda_s: params.lambda_s(),
            rates: ScaledRates::new(params, scale),
            slots: vec![0.0; SLOTS_PER_LEVEL * n],
        };
        for k in 0..n {
            table.refresh(k, state);
        }
        table
    }

    fn refresh(&mut self, k: usize, state: &DiscreteState) {
        let at = k * SLOTS_PER_LEVEL;
        self.slots[at..at + SLOTS_PER_LEVEL]
            .copy_from_slice(&self.rates.level_slots(state.b[k], state.s[k]));
    }

    /// Summed in the same order as the enumerated list, so the value is
    /// bitwise equal to summing `enumerate_events`.
    fn total(&self) -> f64 {
        let mut acc = self.lambda_b + self.lambda_s;
        for &r in &self.slots {
            if r > 0.0 {
                acc += r;
            }
        }
        acc
    }

    fn select(&self, target: f64, n: usize) -> EventKind {
        let mut acc = self.lambda_b;
        if target < acc {
            return EventKind::BuyerArrival;
        }
        acc += self.lambda_s;
        if target < acc {
            return EventKind::SellerArrival;
        }
        let mut last = EventKind::SellerArrival;
        for (i, &r) in self.slots.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                last = slot_kind(i / SLOTS_PER_LEVEL, i % SLOTS_PER_LEVEL, n);
                if target < acc {
                    return last;
                }
            }
        }
        // rounding at the very top of the range
        last
    }

    fn as_events(&self, n: usize) -> Vec<Event> {
        let mut out = vec![
            Event {
                kind: EventKind::BuyerArrival,
                rate: self.lambda_b,
            },
            Event {
                kind: EventKind::SellerArrival,
                rate: self.lambda_s,
            },
        ];
        for (i, &r) in self.slots.iter().enumerate() {
            if r > 0.0 {
                out.push(Event {
                    kind: slot_kind(i / SLOTS_PER_LEVEL, i % SLOTS_PER_LEVEL, n),
                    rate: r,
                });
            }
        }
        out
    }
}

struct RunOutput {
    samples: Vec<FluidState>,
    final_state: DiscreteState,
    counters: EventCounters,
}

/// Runs the chain from `initial` up to scaled time `tau_end`, recording the
/// scaled state at each of `sample_taus` (ascending, all `<= tau_end`).
fn run_sampled<R: Rng + ?Sized>(
    params: &ModelParams,
    scale: ScalingLevel,
    initial: DiscreteState,
    sample_taus: &[f64],
    tau_end: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<RunOutput, SimError> {
    let n = params.n_levels();
    let l = scale.as_f64();
    let t_end = tau_end * l;
    let mut state = initial;
    let mut table = RateTable::new(params, scale, &state);
    let mut counters = EventCounters::new(n);
    let mut samples = Vec::with_capacity(sample_taus.len());
    let mut next_sample = 0;
    let mut t = 0.0;
    let mut n_events = 0u64;

    loop {
        let total = table.total();
        let t_next = t + draw_holding(rng, total);
        // state is constant on [t, t_next)
        while next_sample < sample_taus.len() && sample_taus[next_sample] * l < t_next {
            samples.push(scale_state(&state, scale));
            next_sample += 1;
        }
        if t_next > t_end {
            break;
        }
        let kind = table.select(rng.random::<f64>() * total, n);
        apply_event_in_place(&mut state, kind).expect("table only holds enabled events");
        counters.record(kind);
        let (a, b) = touched_levels(kind, n);
        table.refresh(a, &state);
        if let Some(b) = b {
            table.refresh(b, &state);
        }
        if opts.verify_rates {
            assert_eq!(
                table.as_events(n),
                enumerate_events(&state, params, scale),
                "incremental rate table diverged from full enumeration"
            );
        }
        t = t_next;
        n_events += 1;
        if n_events >= opts.max_events {
            return Err(SimError::BudgetExceeded {
                cap: opts.max_events,
            });
        }
    }
    while samples.len() < sample_taus.len() {
        samples.push(scale_state(&state, scale));
    }
    Ok(RunOutput {
        samples,
        final_state: state,
        counters,
    })
}

/// Sample times `0, dt, 2 dt, ...` up to `tau_max`, with `tau_max` itself
/// appended when it is not on the lattice.
pub fn sample_grid(tau_max: f64, dt: f64) -> Vec<f64> {
    let slack = 1e-9 * dt;
    let mut grid = Vec::new();
    let mut j = 0u64;
    loop {
        let tau = j as f64 * dt;
        if tau > tau_max + slack {
            break;
        }
        grid.push(tau.min(tau_max));
        j += 1;
    }
    if let Some(&last) = grid.last() {
        if last < tau_max - slack {
            grid.push(tau_max);
        }
    }
    grid
}

/// Simulates `V^(L)` on `[0, tau_max]` from `round(L * x0), round(L * y0)`.
pub fn simulate(
    params: &ModelParams,
    scale: ScalingLevel,
    init: &FluidState,
    tau_max: f64,
    sample_dt: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    init.check_dimension(params.n_levels())?;
    if !(tau_max >= 0.0) || !tau_max.is_finite() {
        return Err(SimError::InvalidInput(format!("tau_max must be >= 0, got {tau_max}")));
    }
    if !(sample_dt > 0.0) {
        return Err(SimError::InvalidInput(format!("sample_dt must be > 0, got {sample_dt}")));
    }
    let initial = DiscreteState::from_fluid(init, scale);
    let times = sample_grid(tau_max, sample_dt);
    let mut rng = rng_from_seed(seed);
    let out = run_sampled(params, scale, initial.clone(), &times, tau_max, &mut rng, opts)?;
    Ok(Trajectory {
        times,
        states: out.samples,
        initial_state: initial,
        final_state: out.final_state,
        counters: out.counters,
        seed,
        scale,
    })
}

/// Samples of `V^(L)` from one long run started at the empty book: the
/// first at `burn_in`, then every `sample_gap`.
pub fn empirical_equilibrium(
    params: &ModelParams,
    scale: ScalingLevel,
    burn_in: f64,
    n_samples: usize,
    sample_gap: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<FluidState>, SimError> {
    if !(burn_in > 0.0) || !(sample_gap > 0.0) {
        return Err(SimError::InvalidInput(
            "burn_in and sample_gap must be > 0".into(),
        ));
    }
    if n_samples == 0 {
        return Ok(Vec::new());
    }
    let taus: Vec<f64> = (0..n_samples)
        .map(|j| burn_in + j as f64 * sample_gap)
        .collect();
    let tau_end = *taus.last().unwrap();
    let mut rng = rng_from_seed(seed);
    let out = run_sampled(
        params,
        scale,
        DiscreteState::empty(params.n_levels()),
        &taus,
        tau_end,
        &mut rng,
        opts,
    )?;
    Ok(out.samples)
}
