//! Hessian spectrum diagnostics for the critic loss: stochastic Lanczos
//! quadrature, conditioning summaries, a dense reference eigensolver, the
//! plasticity meter, and IQM aggregation.

mod lanczos;
mod summary;

use std::fmt::Write as _;
use std::path::Path;

pub use lanczos::{lanczos_run, lanczos_spectrum, tridiagonal_eigen, RitzRun, SpectrumEstimate, BREAKDOWN};
pub use summary::{
    aggregate_iqm, aggregate_iqm_stratified, conditioning_summary, iqm, plasticity_probe, weighted_kurtosis,
    ConditioningSummary, PlasticityRecord, DEGENERATE, FLOOR_RATIO,
};

use crate::diffcore::{dense_hessian, HvpOracle, Objective};
use crate::error::Result;
use crate::sacloop::fmt_num;

pub const DEFAULT_STEPS: usize = 64;
pub const DEFAULT_PROBES: usize = 8;

/// All eigenvalues of the assembled Hessian, ascending.
pub fn dense_eigenvalues<O: Objective>(oracle: &HvpOracle<O>) -> Result<Vec<f64>> {
    let h = dense_hessian(oracle, oracle.dim())?;
    let n = h.rows;
    let m = nalgebra::DMatrix::from_row_slice(n, n, &h.data);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Conditioning of an exact spectrum under the same floor rule.
pub fn dense_conditioning(eigenvalues: &[f64], floor_ratio: f64) -> Result<ConditioningSummary> {
    let w = vec![1.0 / eigenvalues.len() as f64; eigenvalues.len()];
    let est = SpectrumEstimate {
        ritz_values: eigenvalues.to_vec(),
        ritz_weights: w,
        num_probes: 1,
        lanczos_steps: eigenvalues.len(),
        seed: 0,
    };
    conditioning_summary(&est, floor_ratio)
}

pub fn spectrum_csv(est: &SpectrumEstimate) -> String {
    let mut s = String::from("ritz_value,ritz_weight\n");
    for (v, w) in est.ritz_values.iter().zip(&est.ritz_weights) {
        let _ = writeln!(s, "{},{}", fmt_num(*v), fmt_num(*w));
    }
    s
}

pub fn conditioning_csv(rows: &[(usize, ConditioningSummary)]) -> String {
    let mut s = String::from("step,kappa,lambda_max,lambda_min_abs,kurtosis\n");
    for (step, c) in rows {
        let _ = writeln!(
            s,
            "{step},{},{},{},{}",
            fmt_num(c.kappa),
            fmt_num(c.lambda_max),
            fmt_num(c.lambda_min_abs),
            fmt_num(c.kurtosis)
        );
    }
    s
}

/// Writes `spectrum_<step>.csv` into `dir`.
pub fn write_spectrum(dir: &Path, step: usize, est: &SpectrumEstimate) -> Result<()> {
    std::fs::write(dir.join(format!("spectrum_{step}.csv")), spectrum_csv(est))?;
    Ok(())
}

/// Writes `conditioning.csv` into `dir`.
pub fn write_conditioning(dir: &Path, rows: &[(usize, ConditioningSummary)]) -> Result<()> {
    std::fs::write(dir.join("conditioning.csv"), conditioning_csv(rows))?;
    Ok(())
}
