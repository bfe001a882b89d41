use super::config::ProjectionGranularity;
use crate::diffcore::params::l2;
use crate::diffcore::ParamVector;
use crate::error::{Result, XqcError};

/// Norms within this distance of one are treated as already projected, which
/// makes projection idempotent bit for bit.
const UNIT_TOL: f64 = 8.0 * f64::EPSILON;

fn normalize(block: &mut [f64], layer: &str) -> Result<()> {
    let n = l2(block);
    if n == 0.0 || !n.is_finite() {
        return Err(XqcError::DegenerateWeight {
            layer: layer.to_string(),
        });
    }
    if (n - 1.0).abs() <= UNIT_TOL {
        return Ok(());
    }
    block.iter_mut().for_each(|v| *v /= n);
    Ok(())
}

/// Project every hidden dense weight matrix onto the unit sphere. Biases,
/// normalization affine parameters, and output heads are left untouched.
pub fn project_weights(theta: &ParamVector, granularity: ProjectionGranularity) -> Result<ParamVector> {
    let mut out = theta.clone();
    project_in_place(&mut out, granularity)?;
    Ok(out)
}

pub fn project_in_place(theta: &mut ParamVector, granularity: ProjectionGranularity) -> Result<()> {
    let entries: Vec<_> = theta.layout.projected().cloned().collect();
    for e in entries {
        let block = theta.slice_mut(&e);
        match granularity {
            ProjectionGranularity::Matrix => normalize(block, &e.layer_id)?,
            ProjectionGranularity::Row => {
                for row in block.chunks_mut(e.cols) {
                    normalize(row, &e.layer_id)?;
                }
            }
        }
    }
    Ok(())
}

/// Frobenius norm of each projected layer, in layout order.
pub fn projected_norms(theta: &ParamVector) -> Vec<(String, f64)> {
    theta
        .layout
        .projected()
        .map(|e| (e.layer_id.clone(), l2(theta.slice(e))))
        .collect()
}
