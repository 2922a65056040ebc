//! Model parameters and the scaling level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} must be strictly positive, got {value}")]
    NonPositiveRate { field: &'static str, value: f64 },
    #[error("beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("n_levels must be at least 1, got {0}")]
    BadN(usize),
    #[error("price_labels: {0}")]
    BadPriceLabels(String),
    #[error("scaling level L must be at least 1")]
    BadScale,
}

/// Unvalidated parameter record, as read from a config file or flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub n_levels: usize,
    pub lambda_b: f64,
    pub lambda_s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_labels: Option<Vec<f64>>,
}

/// Validated rate constants of the order book model.
///
/// `alpha` is the per-trader move rate, `beta` the quit rate and `gamma`
/// the trade rate, all before division by the scaling level. Buyers arrive
/// at level 1 with rate `lambda_b`, sellers at level N with rate `lambda_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    n_levels: usize,
    lambda_b: f64,
    lambda_s: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    price_labels: Option<Vec<f64>>,
}

/// Checks a candidate record and returns it unchanged on success.
///
/// `beta = 0` is accepted (no quitting); the existence and uniqueness of the
/// fixed point hold for any non-negative quit rate.
pub fn validate_params(raw: RawParams) -> Result<ModelParams, ParamError> {
    if raw.n_levels < 1 {
        return Err(ParamError::BadN(raw.n_levels));
    }
    for (field, value) in [
        ("lambda_b", raw.lambda_b),
        ("lambda_s", raw.lambda_s),
        ("alpha", raw.alpha),
        ("gamma", raw.gamma),
    ] {
        // NaN fails this comparison too
        if !(value > 0.0) || !value.is_finite() {
            return Err(ParamError::NonPositiveRate { field, value });
        }
    }
    if !(raw.beta >= 0.0) || !raw.beta.is_finite() {
        return Err(ParamError::NegativeBeta(raw.beta));
    }
    if let Some(labels) = &raw.price_labels {
        if labels.len() != raw.n_levels {
            return Err(ParamError::BadPriceLabels(format!(
                "expected {} labels, got {}",
                raw.n_levels,
                labels.len()
            )));
        }
        if labels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ParamError::BadPriceLabels(
                "labels must be strictly increasing".into(),
            ));
        }
    }
    Ok(ModelParams {
        n_levels: raw.n_levels,
        lambda_b: raw.lambda_b,
        lambda_s: raw.lambda_s,
        alpha: raw.alpha,
        beta: raw.beta,
        gamma: raw.gamma,
        price_labels: raw.price_labels,
    })
}

impl ModelParams {
    pub fn new(
        n_levels: usize,
        lambda_b: f64,
        lambda_s: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
    ) -> Result<Self, ParamError> {
        validate_params(RawParams {
            n_levels,
            lambda_b,
            lambda_s,
            alpha,
            beta,
            gamma,
            price_labels: None,
        })
    }

    /// All five constants set to one.
    pub fn unit(n_levels: usize) -> Result<Self, ParamError> {
        Self::new(n_levels, 1.0, 1.0, 1.0, 1.0, 1.0)
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }
    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }
    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn price_labels(&self) -> Option<&[f64]> {
        self.price_labels.as_deref()
    }

    /// Copy with a different seller arrival rate.
    pub fn with_lambda_s(&self, lambda_s: f64) -> Result<Self, ParamError> {
        let mut raw = self.to_raw();
        raw.lambda_s = lambda_s;
        validate_params(raw)
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            n_levels: self.n_levels,
            lambda_b: self.lambda_b,
            lambda_s: self.lambda_s,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            price_labels: self.price_labels.clone(),
        }
    }
}

/// Scaling parameter L: per-trader rates are divided by L, states and time
/// are measured in units of L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ScalingLevel(u64);

impl ScalingLevel {
    pub fn new(l: u64) -> Result<Self, ParamError> {
        if l == 0 {
            Err(ParamError::BadScale)
        } else {
            Ok(Self(l))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}
