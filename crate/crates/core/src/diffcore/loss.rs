//! Batch-mean critic losses, generic over the scalar type so they sit on
//! the same tape as the network layers.

use super::mat::Mat;
use super::real::Real;
use crate::error::{Result, XqcError};

/// Numerically stable `log softmax` of one row.
pub fn log_softmax<T: Real>(row: &[T]) -> Vec<T> {
    let max = row.iter().map(|v| v.primal()).fold(f64::NEG_INFINITY, f64::max);
    let shift = T::cst(max);
    let lse = row.iter().map(|&v| (v - shift).exp()).sum::<T>().ln() + shift;
    row.iter().map(|&v| v - lse).collect()
}

/// Cross-entropy `−Σ tᵢ log softmax(yᵢ)` averaged over the first `rows`
/// rows of `logits`. Returns the loss and `∂loss/∂logits` (zero for rows
/// beyond `rows`).
pub fn cross_entropy<T: Real>(logits: &Mat<T>, target: &Mat<f64>, rows: usize) -> Result<(T, Mat<T>)> {
    if target.rows != rows || target.cols != logits.cols || rows > logits.rows {
        return Err(crate::error::shape_err(
            "cross_entropy target",
            format!("{}x{}", rows, logits.cols),
            format!("{}x{}", target.rows, target.cols),
        ));
    }
    let inv_n = 1.0 / rows as f64;
    let mut total = T::zero();
    let mut grad = Mat::zeros(logits.rows, logits.cols);
    for r in 0..rows {
        let lp = log_softmax(logits.row(r));
        let t = target.row(r);
        let g = grad.row_mut(r);
        for j in 0..lp.len() {
            if t[j] != 0.0 {
                total -= lp[j].scale(t[j]);
            }
            g[j] = (lp[j].exp() - T::cst(t[j])).scale(inv_n);
        }
    }
    let loss = total.scale(inv_n);
    if !loss.is_finite() {
        return Err(XqcError::NumericOverflow { node: "softmax".into() });
    }
    Ok((loss, grad))
}

/// `½ (q − y)²` averaged over the first `rows` rows of a one-column output.
pub fn half_squared_error<T: Real>(q: &Mat<T>, target: &[f64], rows: usize) -> Result<(T, Mat<T>)> {
    if q.cols != 1 || target.len() != rows || rows > q.rows {
        return Err(crate::error::shape_err(
            "half_squared_error",
            format!("{}x1 / {} targets", q.rows, rows),
            format!("{}x{} / {} targets", q.rows, q.cols, target.len()),
        ));
    }
    let inv_n = 1.0 / rows as f64;
    let mut total = T::zero();
    let mut grad = Mat::zeros(q.rows, 1);
    for r in 0..rows {
        let e = q.data[r] - T::cst(target[r]);
        total += (e * e).scale(0.5);
        grad.data[r] = e.scale(inv_n);
    }
    let loss = total.scale(inv_n);
    if !loss.is_finite() {
        return Err(XqcError::NonFinite("squared error".into()));
    }
    Ok((loss, grad))
}
