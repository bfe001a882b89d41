use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lanczos::SpectrumEstimate;
use crate::diffcore::{l2, ParamVector};
use crate::error::{Result, XqcError};

/// Default relative floor on `|λ|` before forming the condition number.
pub const FLOOR_RATIO: f64 = 1e-8;

/// Below this every Ritz value counts as zero.
pub const DEGENERATE: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningSummary {
    pub kappa: f64,
    pub lambda_max: f64,
    pub lambda_min_abs: f64,
    /// Weighted fourth standardized moment of the Ritz density (not excess).
    pub kurtosis: f64,
    pub floor_ratio: f64,
}

pub fn conditioning_summary(est: &SpectrumEstimate, floor_ratio: f64) -> Result<ConditioningSummary> {
    if est.is_empty() {
        return Err(XqcError::Precondition("empty spectrum estimate".into()));
    }
    let lambda_max = est.max_abs();
    if lambda_max < DEGENERATE {
        return Err(XqcError::DegenerateSpectrum(lambda_max));
    }
    let floor = floor_ratio * lambda_max;
    let lambda_min_abs = est
        .ritz_values
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v >= floor)
        .fold(f64::INFINITY, f64::min);
    Ok(ConditioningSummary {
        kappa: lambda_max / lambda_min_abs,
        lambda_max,
        lambda_min_abs,
        kurtosis: weighted_kurtosis(&est.ritz_values, &est.ritz_weights),
        floor_ratio,
    })
}

/// `Σ w (x − μ)⁴ / (Σ w (x − μ)²)²` with weights normalized; NaN for a
/// point mass.
pub fn weighted_kurtosis(x: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mean = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let (mut m2, mut m4) = (0.0, 0.0);
    for (a, b) in x.iter().zip(w) {
        let d = (a - mean) * (a - mean);
        m2 += b * d;
        m4 += b * d * d;
    }
    m2 /= total;
    m4 /= total;
    if m2 == 0.0 {
        return f64::NAN;
    }
    m4 / (m2 * m2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlasticityRecord {
    pub step: usize,
    /// Global `‖θ‖₂`.
    pub param_norm: f64,
    /// Norm of the concatenated projected layers.
    pub projected_norm: f64,
    pub layer_norms: Vec<(String, f64)>,
    pub grad_norm: f64,
    /// `η_t / ‖θ‖₂` over the scale-invariant (projected) weights, which is
    /// constant under weight projection.
    pub elr: f64,
}

pub fn plasticity_probe(step: usize, theta: &ParamVector, grad: Option<&ParamVector>, lr: f64) -> PlasticityRecord {
    let layer_norms: Vec<(String, f64)> = theta
        .layout
        .projected()
        .map(|e| (e.layer_id.clone(), l2(theta.slice(e))))
        .collect();
    let projected_norm = layer_norms.iter().map(|(_, n)| n * n).sum::<f64>().sqrt();
    let param_norm = theta.norm();
    PlasticityRecord {
        step,
        param_norm,
        projected_norm,
        layer_norms,
        grad_norm: grad.map_or(0.0, |g| g.norm()),
        elr: if projected_norm > 0.0 { lr / projected_norm } else { 0.0 },
    }
}

/// Mean of the middle half by rank, trimming `⌊n/4⌋` values from each end.
pub fn iqm(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = v.len() / 4;
    let mid = &v[cut..v.len() - cut];
    if mid.is_empty() {
        return f64::NAN;
    }
    // offset from the smallest kept value so constant input is returned exactly
    let base = mid[0];
    base + mid.iter().map(|x| x - base).sum::<f64>() / mid.len() as f64
}

/// IQM with a 90 % percentile interval; see [`aggregate_iqm_stratified`].
pub fn aggregate_iqm(values: &[f64], bootstrap: usize, seed: u64) -> Result<(f64, f64, f64)> {
    aggregate_iqm_stratified(&[values], bootstrap, seed)
}

/// IQM of all values pooled, with a 90 % bootstrap interval that resamples
/// within each stratum (task). The interval is widened if needed so that it
/// always contains the point estimate.
pub fn aggregate_iqm_stratified(strata: &[&[f64]], bootstrap: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let pooled: Vec<f64> = strata.iter().flat_map(|s| s.iter().copied()).collect();
    if pooled.len() < 3 || strata.iter().any(|s| s.is_empty()) {
        return Err(XqcError::Precondition(
            "IQM needs >= 3 values and non-empty strata".into(),
        ));
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(XqcError::NonFinite("IQM input".into()));
    }
    let point = iqm(&pooled);
    if bootstrap == 0 {
        return Ok((point, point, point));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(bootstrap);
    let mut sample = Vec::with_capacity(pooled.len());
    for _ in 0..bootstrap {
        sample.clear();
        for s in strata {
            for _ in 0..s.len() {
                sample.push(s[rng.random_range(0..s.len())]);
            }
        }
        stats.push(iqm(&sample));
    }
    stats.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (stats.len() - 1) as f64;
        let (i, f) = (pos.floor() as usize, pos.fract());
        if i + 1 < stats.len() {
            stats[i] + f * (stats[i + 1] - stats[i])
        } else {
            stats[i]
        }
    };
    Ok((point, q(0.05).min(point), q(0.95).max(point)))
}
