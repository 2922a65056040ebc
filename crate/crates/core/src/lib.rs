//! Limit order book with N price levels: the continuous-time Markov chain,
//! its fluid-limit ODE system and the fixed point of that system.
//!
//! - [`params`], [`state`], [`events`]: the model and its transition rates.
//! - [`sim`]: exact simulation of the chain at scaling level L.
//! - [`ode`]: the limiting ODEs, integration and comparison checks.
//! - [`fixed_point`]: the stationary point by shooting and by monotone
//!   recursion, plus regime classification.
//! - [`experiments`]: Monte Carlo studies of the limit theorems.
//! - [`output`]: CSV writers.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod events;
pub mod experiments;
pub mod fixed_point;
pub mod ode;
pub mod output;
pub mod params;
pub mod rng;
pub mod sim;
pub mod state;

pub use events::{apply_event, enumerate_events, Event, EventKind, ModelError};
pub use params::{validate_params, ModelParams, ParamError, RawParams, ScalingLevel};
pub use state::{scale_state, DiscreteState, FluidState, StateError};
