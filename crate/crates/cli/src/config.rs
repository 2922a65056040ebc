//! Configuration file schema and flag/file merging.
//!
//! Precedence, per field: command-line flag, then config file, then the
//! built-in default. Model parameters have no default.

use std::fs;
use std::path::{Path, PathBuf};

use lobfluid_core::{validate_params, ModelParams, ParamError, RawParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT_DIR: &str = "lobfluid-out";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

pub fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelFile,
    #[serde(default)]
    pub simulate: SimulateFile,
    #[serde(default)]
    pub integrate: IntegrateFile,
    #[serde(default)]
    pub solve: SolveFile,
    #[serde(default)]
    pub converge: ConvergeFile,
    #[serde(default)]
    pub equilibrium: EquilibriumFile,
    #[serde(default)]
    pub sweep: SweepFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: Option<usize>,
    pub lambda_b: Option<f64>,
    pub lambda_s: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub price_labels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub scale: Option<u64>,
    pub tau_max: Option<f64>,
    pub sample_dt: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub max_events: Option<u64>,
    pub verify_rates: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateFile {
    pub tau_max: Option<f64>,
    pub tol: Option<f64>,
    pub sample_dt: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFile {
    pub method: Option<Method>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeFile {
    pub levels: Option<Vec<u64>>,
    pub replicas: Option<usize>,
    pub horizon: Option<f64>,
    pub grid_fraction: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumFile {
    pub levels: Option<Vec<u64>>,
    pub burn_in: Option<f64>,
    pub n_samples: Option<usize>,
    pub sample_gap: Option<f64>,
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub lambda_s_values: Option<Vec<f64>>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Recursive,
    Shooting,
    Both,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Model parameter overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct ModelFlags {
    pub n: Option<usize>,
    pub lambda_b: Option<f64>,
    pub lambda_s: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

pub fn resolve_model(flags: &ModelFlags, file: &ModelFile) -> Result<ModelParams, ConfigError> {
    let raw = RawParams {
        n_levels: flags.n.or(file.n).ok_or(ConfigError::Missing("n"))?,
        lambda_b: flags.lambda_b.or(file.lambda_b).ok_or(ConfigError::Missing("lambda_b"))?,
        lambda_s: flags.lambda_s.or(file.lambda_s).ok_or(ConfigError::Missing("lambda_s"))?,
        alpha: flags.alpha.or(file.alpha).ok_or(ConfigError::Missing("alpha"))?,
        beta: flags.beta.or(file.beta).ok_or(ConfigError::Missing("beta"))?,
        gamma: flags.gamma.or(file.gamma).ok_or(ConfigError::Missing("gamma"))?,
        price_labels: file.price_labels.clone(),
    };
    validate_params(raw).map_err(|e| {
        let field = match &e {
            ParamError::NonPositiveRate { field, .. } => *field,
            ParamError::NegativeBeta(_) => "beta",
            ParamError::BadN(_) => "n",
            ParamError::BadPriceLabels(_) => "price_labels",
            ParamError::BadScale => "scale",
        };
        invalid(field, e.to_string())
    })
}

pub fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be a finite number > 0, got {v}")))
    }
}

pub fn nonnegative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be a finite number >= 0, got {v}")))
    }
}

/// Initial fluid state; missing vectors default to zeros of length `n`.
pub fn initial_state(
    n: usize,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
) -> Result<lobfluid_core::FluidState, ConfigError> {
    let x = x0.unwrap_or_else(|| vec![0.0; n]);
    let y = y0.unwrap_or_else(|| vec![0.0; n]);
    for (field, v) in [("x0", &x), ("y0", &y)] {
        if v.len() != n {
            return Err(invalid(field, format!("expected {n} entries, got {}", v.len())));
        }
        if v.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(invalid(field, "entries must be finite and >= 0"));
        }
    }
    Ok(lobfluid_core::FluidState { x, y })
}
