#![allow(dead_code)]

use lobfluid_core::ModelParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Level count in `1..=max_n`, all five rates log-uniform in `[0.1, 10]`.
pub fn random_params(rng: &mut ChaCha8Rng, max_n: usize) -> ModelParams {
    let n = rng.random_range(1..=max_n);
    let mut r = || log_uniform(rng, 0.1, 10.0);
    let (lb, ls, a, b, g) = (r(), r(), r(), r(), r());
    ModelParams::new(n, lb, ls, a, b, g).unwrap()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}
