//! Categorical value distributions, the C51 target projection, the two
//! Bellman losses, and the effective-update certificate for projected
//! categorical critics.

mod elr;

pub use elr::{certify_elr_bound, ElrReport, ElrStep, LayerUpdate};

use crate::error::{Result, XqcError};

/// Evenly spaced atoms `z_1 < … < z_m` on `[v_min, v_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalSupport {
    pub v_min: f64,
    pub v_max: f64,
    atoms: Vec<f64>,
}

impl CategoricalSupport {
    pub fn new(m: usize, v_min: f64, v_max: f64) -> Result<Self> {
        if m < 2 {
            return Err(XqcError::Config(format!("support needs >= 2 atoms, got {m}")));
        }
        if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(XqcError::Config(format!("bad support [{v_min}, {v_max}]")));
        }
        let span = v_max - v_min;
        let last = (m - 1) as f64;
        let atoms = (0..m)
            .map(|i| {
                if i == m - 1 {
                    v_max
                } else {
                    v_min + span * (i as f64) / last
                }
            })
            .collect();
        Ok(Self { v_min, v_max, atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.len() - 1) as f64
    }

    /// Fractional atom index of `v` after clamping into the support.
    fn position(&self, v: f64) -> f64 {
        let tz = v.clamp(self.v_min, self.v_max);
        let b = (tz - self.v_min) * (self.len() - 1) as f64 / (self.v_max - self.v_min);
        b.clamp(0.0, (self.len() - 1) as f64)
    }
}

/// Probabilities over the atoms of a [`CategoricalSupport`].
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalValueDistribution {
    pub probs: Vec<f64>,
}

impl CategoricalValueDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(XqcError::Precondition("probabilities must be finite and >= 0".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(XqcError::Precondition(format!("probabilities sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let probs = softmax(logits)?;
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            probs: vec![1.0 / m as f64; m],
        }
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(XqcError::NonFinite("logits".into()));
    }
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// `Σ p_i z_i`.
pub fn mean_value(d: &CategoricalValueDistribution, s: &CategoricalSupport) -> f64 {
    d.probs.iter().zip(s.atoms()).map(|(p, z)| p * z).sum()
}

/// Shifted atoms `r + γ(1 − done)(z_i − shift)` of a one-step target; the
/// shift carries the entropy bonus `α log π(a'|s')`.
pub fn bellman_atoms(r: f64, gamma: f64, done: bool, shift: f64, s: &CategoricalSupport) -> Vec<f64> {
    let g = if done { 0.0 } else { gamma };
    s.atoms().iter().map(|&z| r + g * (z - shift)).collect()
}

/// Clamp each value into the support and split its weight linearly
/// between the two neighbouring atoms, accumulating into `out`.
pub fn project_into(values: &[f64], weights: &[f64], s: &CategoricalSupport, out: &mut [f64]) {
    debug_assert_eq!(values.len(), weights.len());
    debug_assert_eq!(out.len(), s.len());
    for (&v, &p) in values.iter().zip(weights) {
        let b = s.position(v);
        let l = b.floor();
        let u = b.ceil();
        let (li, ui) = (l as usize, u as usize);
        if li == ui {
            out[li] += p;
        } else {
            out[li] += p * (u - b);
            out[ui] += p * (b - l);
        }
    }
}

pub fn project_target(values: &[f64], weights: &[f64], s: &CategoricalSupport) -> Result<CategoricalValueDistribution> {
    if values.len() != weights.len() {
        return Err(crate::error::shape_err("project_target", values.len(), weights.len()));
    }
    let mut out = vec![0.0; s.len()];
    project_into(values, weights, s, &mut out);
    Ok(CategoricalValueDistribution { probs: out })
}

/// Cross-entropy `−Σ t_i log softmax(ŷ)_i` and its gradient `softmax(ŷ) − t`.
pub fn ce_bellman_loss(logits: &[f64], target: &CategoricalValueDistribution) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.probs.len() {
        return Err(crate::error::shape_err(
            "ce_bellman_loss",
            target.probs.len(),
            logits.len(),
        ));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(XqcError::NonFinite("logits".into()));
    }
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|&l| (l - mx).exp()).sum::<f64>().ln();
    let loss = -target
        .probs
        .iter()
        .zip(logits)
        .map(|(t, l)| if *t == 0.0 { 0.0 } else { t * (l - lse) })
        .sum::<f64>();
    let grad = logits
        .iter()
        .zip(&target.probs)
        .map(|(l, t)| (l - lse).exp() - t)
        .collect();
    Ok((loss, grad))
}

/// `½(q − target)²` and its derivative `q − target`.
pub fn mse_bellman_loss(q: f64, target: f64) -> (f64, f64) {
    let e = q - target;
    (0.5 * e * e, e)
}

/// Index (0 or 1) of the critic whose predicted distribution has the smaller
/// mean; ties go to the first.
pub fn mean_min_index(p0: &[f64], p1: &[f64], s: &CategoricalSupport) -> usize {
    let m = |p: &[f64]| p.iter().zip(s.atoms()).map(|(a, z)| a * z).sum::<f64>();
    if m(p1) < m(p0) {
        1
    } else {
        0
    }
}
