//! Occupancy states of the book, discrete and scaled.

use serde::Serialize;
use thiserror::Error;

use crate::params::ScalingLevel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("buyer and seller vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("state has {got} levels, model has {expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error("component {0} is negative or not finite")]
    BadComponent(usize),
}

/// Integer occupancy: `b[k]` buyers and `s[k]` sellers waiting at level k
/// (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DiscreteState {
    pub b: Vec<u64>,
    pub s: Vec<u64>,
}

impl DiscreteState {
    pub fn new(b: Vec<u64>, s: Vec<u64>) -> Result<Self, StateError> {
        if b.len() != s.len() {
            return Err(StateError::LengthMismatch(b.len(), s.len()));
        }
        Ok(Self { b, s })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            b: vec![0; n],
            s: vec![0; n],
        }
    }

    pub fn n_levels(&self) -> usize {
        self.b.len()
    }

    pub fn population(&self) -> u64 {
        self.b.iter().chain(&self.s).sum()
    }

    /// Rounds `L * x` half-up, componentwise.
    pub fn from_fluid(state: &FluidState, scale: ScalingLevel) -> Self {
        let l = scale.as_f64();
        let round = |v: &f64| (l * v + 0.5).floor() as u64;
        Self {
            b: state.x.iter().map(round).collect(),
            s: state.y.iter().map(round).collect(),
        }
    }
}

/// Real-valued occupancy (scaled buyers `x`, scaled sellers `y`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FluidState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StateError> {
        if x.len() != y.len() {
            return Err(StateError::LengthMismatch(x.len(), y.len()));
        }
        if let Some(i) = x
            .iter()
            .chain(&y)
            .position(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(StateError::BadComponent(i));
        }
        Ok(Self { x, y })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; n],
        }
    }

    pub fn n_levels(&self) -> usize {
        self.x.len()
    }

    pub fn check_dimension(&self, n: usize) -> Result<(), StateError> {
        if self.x.len() != n {
            return Err(StateError::WrongDimension {
                expected: n,
                got: self.x.len(),
            });
        }
        Ok(())
    }

    /// Concatenation `(x_1..x_N, y_1..y_N)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.x.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self {
            x: v[..n].to_vec(),
            y: v[n..].to_vec(),
        }
    }

    /// Euclidean distance over the concatenated 2N-vector.
    pub fn distance(&self, other: &FluidState) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup_distance(&self, other: &FluidState) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .chain(self.y.iter().zip(&other.y))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Divides every occupancy count by L.
pub fn scale_state(state: &DiscreteState, scale: ScalingLevel) -> FluidState {
    let l = scale.as_f64();
    FluidState {
        x: state.b.iter().map(|&v| v as f64 / l).collect(),
        y: state.s.iter().map(|&v| v as f64 / l).collect(),
    }
}
