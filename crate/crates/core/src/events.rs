//! Transition events of the order book chain and their rates.
//!
//! Per-trader rates at scaling level L are `gamma/L` (trade), `beta/L`
//! (quit) and `alpha/L` (move one level). Buyers drift up, sellers drift
//! down; a buyer moving up from the top level or a seller moving down from
//! the bottom level leaves the book. Trades at level k fire as one pooled
//! event with rate `(gamma/L) * min(b_k, s_k)`.
//!
//! Canonical order (used for enumeration and for the categorical draw in
//! the simulator): `BuyerArrival`, `SellerArrival`, then for each level k
//! ascending the five slots `Trade(k)`, `BuyerQuit(k)`, `BuyerMove(k)` (or
//! `BuyerExitTop` at the top level), `SellerQuit(k)`, `SellerMove(k)` (or
//! `SellerExitBottom` at level 0). Zero-rate events are omitted.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::params::{ModelParams, ScalingLevel};
use crate::state::DiscreteState;

/// Number of rate slots per price level.
pub const SLOTS_PER_LEVEL: usize = 5;

/// Level indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    BuyerArrival,
    SellerArrival,
    Trade(usize),
    BuyerQuit(usize),
    SellerQuit(usize),
    /// Buyer moves from level k to k + 1.
    BuyerMove(usize),
    /// Seller moves from level k to k - 1.
    SellerMove(usize),
    BuyerExitTop,
    SellerExitBottom,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one-based levels for humans
        match *self {
            EventKind::BuyerArrival => write!(f, "BuyerArrival"),
            EventKind::SellerArrival => write!(f, "SellerArrival"),
            EventKind::Trade(k) => write!(f, "Trade({})", k + 1),
            EventKind::BuyerQuit(k) => write!(f, "BuyerQuit({})", k + 1),
            EventKind::SellerQuit(k) => write!(f, "SellerQuit({})", k + 1),
            EventKind::BuyerMove(k) => write!(f, "BuyerMove({}->{})", k + 1, k + 2),
            EventKind::SellerMove(k) => write!(f, "SellerMove({}->{})", k + 1, k),
            EventKind::BuyerExitTop => write!(f, "BuyerExitTop"),
            EventKind::SellerExitBottom => write!(f, "SellerExitBottom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("event {0} is not enabled in the current state")]
    DisabledEvent(EventKind),
}

/// Per-trader rates at a given scaling level.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaledRates {
    pub trade: f64,
    pub quit: f64,
    pub mv: f64,
}

impl ScaledRates {
    pub fn new(params: &ModelParams, scale: ScalingLevel) -> Self {
        let l = scale.as_f64();
        Self {
            trade: params.gamma() / l,
            quit: params.beta() / l,
            mv: params.alpha() / l,
        }
    }

    /// Rates of the five slots at level `k`, in canonical order.
    #[inline]
    pub fn level_slots(&self, b: u64, s: u64) -> [f64; SLOTS_PER_LEVEL] {
        let (bf, sf) = (b as f64, s as f64);
        [
            self.trade * b.min(s) as f64,
            self.quit * bf,
            self.mv * bf,
            self.quit * sf,
            self.mv * sf,
        ]
    }
}

/// Event kind for slot `slot` of level `k` in an `n`-level book.
#[inline]
pub(crate) fn slot_kind(k: usize, slot: usize, n: usize) -> EventKind {
    match slot {
        0 => EventKind::Trade(k),
        1 => EventKind::BuyerQuit(k),
        2 if k + 1 == n => EventKind::BuyerExitTop,
        2 => EventKind::BuyerMove(k),
        3 => EventKind::SellerQuit(k),
        4 if k == 0 => EventKind::SellerExitBottom,
        4 => EventKind::SellerMove(k),
        _ => unreachable!("slot index out of range"),
    }
}

/// All enabled events of `state`, in canonical order.
pub fn enumerate_events(
    state: &DiscreteState,
    params: &ModelParams,
    scale: ScalingLevel,
) -> Vec<Event> {
    let n = state.n_levels();
    debug_assert_eq!(n, params.n_levels());
    let rates = ScaledRates::new(params, scale);
    let mut events = Vec::with_capacity(2 + SLOTS_PER_LEVEL * n);
    events.push(Event {
        kind: EventKind::BuyerArrival,
        rate: params.lambda_b(),
    });
    events.push(Event {
        kind: EventKind::SellerArrival,
        rate: params.lambda_s(),
    });
    for k in 0..n {
        let slots = rates.level_slots(state.b[k], state.s[k]);
        for (slot, &rate) in slots.iter().enumerate() {
            if rate > 0.0 {
                events.push(Event {
                    kind: slot_kind(k, slot, n),
                    rate,
                });
            }
        }
    }
    events
}

/// `lambda_B + lambda_S + (1/L)[(alpha+beta) * sum(b+s) + gamma * sum min(b,s)]`.
pub fn total_rate_closed_form(
    state: &DiscreteState,
    params: &ModelParams,
    scale: ScalingLevel,
) -> f64 {
    let pop = state.population() as f64;
    let matched: u64 = state.b.iter().zip(&state.s).map(|(b, s)| *b.min(s)).sum();
    params.lambda_b()
        + params.lambda_s()
        + ((params.alpha() + params.beta()) * pop + params.gamma() * matched as f64)
            / scale.as_f64()
}

/// Applies `kind` in place.
pub fn apply_event_in_place(state: &mut DiscreteState, kind: EventKind) -> Result<(), ModelError> {
    let n = state.n_levels();
    let disabled = || ModelError::DisabledEvent(kind);
    let dec = |v: &mut u64| -> Result<(), ModelError> {
        *v = v.checked_sub(1).ok_or_else(disabled)?;
        Ok(())
    };
    match kind {
        EventKind::BuyerArrival => state.b[0] += 1,
        EventKind::SellerArrival => state.s[n - 1] += 1,
        EventKind::Trade(k) => {
            if k >= n || state.b[k] == 0 || state.s[k] == 0 {
                return Err(disabled());
            }
            state.b[k] -= 1;
            state.s[k] -= 1;
        }
        EventKind::BuyerQuit(k) => dec(state.b.get_mut(k).ok_or_else(disabled)?)?,
        EventKind::SellerQuit(k) => dec(state.s.get_mut(k).ok_or_else(disabled)?)?,
        EventKind::BuyerMove(k) => {
            if k + 1 >= n {
                return Err(disabled());
            }
            dec(&mut state.b[k])?;
            state.b[k + 1] += 1;
        }
        EventKind::SellerMove(k) => {
            if k == 0 || k >= n {
                return Err(disabled());
            }
            dec(&mut state.s[k])?;
            state.s[k - 1] += 1;
        }
        EventKind::BuyerExitTop => dec(&mut state.b[n - 1])?,
        EventKind::SellerExitBottom => dec(&mut state.s[0])?,
    }
    Ok(())
}

/// Returns the state after `kind` fires, or `DisabledEvent` if that would
/// drive an occupancy negative. The input is left untouched either way.
pub fn apply_event(state: &DiscreteState, kind: EventKind) -> Result<DiscreteState, ModelError> {
    let mut next = state.clone();
    apply_event_in_place(&mut next, kind)?;
    Ok(next)
}

/// Levels whose occupancy `kind` changes.
pub(crate) fn touched_levels(kind: EventKind, n: usize) -> (usize, Option<usize>) {
    match kind {
        EventKind::BuyerArrival => (0, None),
        EventKind::SellerArrival => (n - 1, None),
        EventKind::Trade(k) | EventKind::BuyerQuit(k) | EventKind::SellerQuit(k) => (k, None),
        EventKind::BuyerMove(k) => (k, Some(k + 1)),
        EventKind::SellerMove(k) => (k, Some(k - 1)),
        EventKind::BuyerExitTop => (n - 1, None),
        EventKind::SellerExitBottom => (0, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds(events: &[Event]) -> Vec<(EventKind, f64)> {
        events.iter().map(|e| (e.kind, e.rate)).collect()
    }

    #[test]
    fn single_level_enumeration() {
        let p = ModelParams::unit(1).unwrap();
        let st = DiscreteState::new(vec![2], vec![3]).unwrap();
        let ev = enumerate_events(&st, &p, ScalingLevel::new(1).unwrap());
        use EventKind::*;
        assert_eq!(
            kinds(&ev),
            vec![
                (BuyerArrival, 1.0),
                (SellerArrival, 1.0),
                (Trade(0), 2.0),
                (BuyerQuit(0), 2.0),
                (BuyerExitTop, 2.0),
                (SellerQuit(0), 3.0),
                (SellerExitBottom, 3.0),
            ]
        );
        let total: f64 = ev.iter().map(|e| e.rate).sum();
        assert_eq!(total, 14.0);
    }

    #[test]
    fn two_level_enumeration_without_trades() {
        let p = ModelParams::unit(2).unwrap();
        let st = DiscreteState::new(vec![1, 0], vec![0, 2]).unwrap();
        let ev = enumerate_events(&st, &p, ScalingLevel::new(10).unwrap());
        use EventKind::*;
        assert_eq!(
            kinds(&ev),
            vec![
                (BuyerArrival, 1.0),
                (SellerArrival, 1.0),
                (BuyerQuit(0), 0.1),
                (BuyerMove(0), 0.1),
                (SellerQuit(1), 0.2),
                (SellerMove(1), 0.2),
            ]
        );
        let total: f64 = ev.iter().map(|e| e.rate).sum();
        assert!((total - 2.6).abs() < 1e-12);
    }

    #[test]
    fn empty_book_only_arrivals() {
        let p = ModelParams::new(4, 0.7, 2.5, 1.0, 3.0, 9.0).unwrap();
        let ev = enumerate_events(&DiscreteState::empty(4), &p, ScalingLevel::new(5).unwrap());
        assert_eq!(
            kinds(&ev),
            vec![(EventKind::BuyerArrival, 0.7), (EventKind::SellerArrival, 2.5)]
        );
    }

    #[test]
    fn apply_examples() {
        let st = DiscreteState::new(vec![2], vec![3]).unwrap();
        let next = apply_event(&st, EventKind::Trade(0)).unwrap();
        assert_eq!(next, DiscreteState::new(vec![1], vec![2]).unwrap());

        let st = DiscreteState::new(vec![1, 0], vec![0, 2]).unwrap();
        let next = apply_event(&st, EventKind::BuyerMove(0)).unwrap();
        assert_eq!(next, DiscreteState::new(vec![0, 1], vec![0, 2]).unwrap());

        let err = apply_event(&DiscreteState::empty(1), EventKind::Trade(0));
        assert_eq!(err, Err(ModelError::DisabledEvent(EventKind::Trade(0))));
    }

    #[test]
    fn out_of_range_moves_are_disabled() {
        let st = DiscreteState::new(vec![1, 1], vec![1, 1]).unwrap();
        assert!(apply_event(&st, EventKind::BuyerMove(1)).is_err());
        assert!(apply_event(&st, EventKind::SellerMove(0)).is_err());
    }

    #[test]
    fn display_is_one_based() {
        assert_eq!(EventKind::SellerMove(1).to_string(), "SellerMove(2->1)");
        assert_eq!(EventKind::Trade(0).to_string(), "Trade(1)");
    }

    fn arb_case() -> impl Strategy<Value = (ModelParams, DiscreteState, u64)> {
        (1usize..6).prop_flat_map(|n| {
            (
                (0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0, 0.0f64..5.0, 0.1f64..5.0),
                prop::collection::vec(0u64..30, n),
                prop::collection::vec(0u64..30, n),
                1u64..200,
            )
                .prop_map(move |((lb, ls, a, b, g), bv, sv, l)| {
                    (
                        ModelParams::new(n, lb, ls, a, b, g).unwrap(),
                        DiscreteState::new(bv, sv).unwrap(),
                        l,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn total_rate_matches_closed_form((p, st, l) in arb_case()) {
            let scale = ScalingLevel::new(l).unwrap();
            let ev = enumerate_events(&st, &p, scale);
            let sum: f64 = ev.iter().map(|e| e.rate).sum();
            let closed = total_rate_closed_form(&st, &p, scale);
            prop_assert!((sum - closed).abs() <= 1e-12 * closed.max(1.0));
        }

        #[test]
        fn enabled_events_apply_cleanly((p, st, l) in arb_case()) {
            let scale = ScalingLevel::new(l).unwrap();
            let ev = enumerate_events(&st, &p, scale);
            // duplicate-free
            let mut seen = std::collections::HashSet::new();
            for e in &ev {
                prop_assert!(e.rate > 0.0);
                prop_assert!(seen.insert(e.kind));
                let next = apply_event(&st, e.kind).unwrap();
                let delta = next.population() as i64 - st.population() as i64;
                let expected = match e.kind {
                    EventKind::BuyerArrival | EventKind::SellerArrival => 1,
                    EventKind::Trade(_) => -2,
                    EventKind::BuyerMove(_) | EventKind::SellerMove(_) => 0,
                    _ => -1,
                };
                prop_assert_eq!(delta, expected);
            }
            // order-stable
            prop_assert_eq!(ev, enumerate_events(&st, &p, scale));
        }
    }
}
