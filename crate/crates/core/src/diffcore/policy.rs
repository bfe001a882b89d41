//! Tanh-squashed diagonal Gaussian policy head with the reparameterized
//! sample, its log-density, and the reverse rule back to (mean, log-std).

use std::f64::consts::{LN_2, PI};

/// Softplus without overflow for large positive inputs.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 − tanh(u)²)`, stable for large `|u|`.
#[inline]
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// One reparameterized sample `a = tanh(μ + σ ε)` per action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub noise: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn squashed_sample(mean: &[f64], log_std: &[f64], noise: &[f64]) -> SquashedSample {
    debug_assert_eq!(mean.len(), log_std.len());
    debug_assert_eq!(mean.len(), noise.len());
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let mut action = Vec::with_capacity(mean.len());
    let mut std = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for j in 0..mean.len() {
        let s = log_std[j].exp();
        let u = mean[j] + s * noise[j];
        log_prob += -0.5 * noise[j] * noise[j] - log_std[j] - half_log_2pi - log_one_minus_tanh_sq(u);
        action.push(u.tanh());
        std.push(s);
    }
    SquashedSample {
        action,
        log_prob,
        noise: noise.to_vec(),
        std,
    }
}

/// Pull `(∂/∂log π, ∂/∂a)` back to `(∂/∂μ, ∂/∂log σ)` with the noise held fixed.
pub fn squashed_backward(sample: &SquashedSample, d_log_prob: f64, d_action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = sample.action.len();
    let mut d_mean = Vec::with_capacity(n);
    let mut d_log_std = Vec::with_capacity(n);
    for j in 0..n {
        let a = sample.action[j];
        let jac = 1.0 - a * a;
        let se = sample.std[j] * sample.noise[j];
        d_mean.push(d_log_prob * 2.0 * a + d_action[j] * jac);
        d_log_std.push(d_log_prob * (-1.0 + 2.0 * a * se) + d_action[j] * jac * se);
    }
    (d_mean, d_log_std)
}
