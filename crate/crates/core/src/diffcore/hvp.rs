//! Scalar objectives over a [`ParamVector`], their gradients, and exact
//! Hessian-vector products by forward-over-reverse differentiation.

use super::layers::{Chain, Mode};
use super::loss::{cross_entropy, half_squared_error};
use super::mat::Mat;
use super::params::{Layout, ParamVector};
use super::real::{Dual, Real};
use crate::error::{Result, XqcError};

/// Largest dimension for which [`dense_hessian`] will assemble `H`.
pub const DENSE_HESSIAN_CAP: usize = 4096;

/// A scalar loss `L(θ)` bound to its data, differentiable in any [`Real`].
pub trait Objective: Sync {
    fn layout(&self) -> &Layout;

    /// Returns `L(θ)` and accumulates `∇L(θ)` into `grad` (zeroed by caller).
    fn eval<T: Real>(&self, theta: &[T], grad: &mut [T]) -> Result<T>;
}

pub fn value_and_grad<O: Objective>(obj: &O, theta: &ParamVector) -> Result<(f64, ParamVector)> {
    theta.check_layout(obj.layout())?;
    let mut grad = vec![0.0; theta.len()];
    let value = obj.eval(&theta.values, &mut grad)?;
    Ok((value, ParamVector::new(grad, theta.layout.clone())?))
}

/// Handle binding an objective at a fixed `θ`; exposes `v ↦ H·v`.
///
/// Immutable after construction, so concurrent `hvp` calls are safe.
pub struct HvpOracle<O> {
    obj: O,
    theta: ParamVector,
}

impl<O: Objective> HvpOracle<O> {
    pub fn new(obj: O, theta: ParamVector) -> Result<Self> {
        theta.check_layout(obj.layout())?;
        Ok(Self { obj, theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn objective(&self) -> &O {
        &self.obj
    }

    pub fn value_and_grad(&self) -> Result<(f64, ParamVector)> {
        value_and_grad(&self.obj, &self.theta)
    }

    /// `H·v` on raw slices.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(crate::error::shape_err("hvp direction", self.dim(), v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(XqcError::NonFinite("hvp direction".into()));
        }
        let theta: Vec<Dual> = self
            .theta
            .values
            .iter()
            .zip(v)
            .map(|(&t, &d)| Dual::new(t, d))
            .collect();
        let mut grad = vec![Dual::default(); theta.len()];
        self.obj.eval(&theta, &mut grad)?;
        let out: Vec<f64> = grad.iter().map(|g| g.d).collect();
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            return Err(XqcError::NumericOverflow {
                node: format!("hvp component {i}"),
            });
        }
        Ok(out)
    }
}

pub fn hvp<O: Objective>(oracle: &HvpOracle<O>, v: &ParamVector) -> Result<ParamVector> {
    v.check_layout(&oracle.theta.layout)?;
    let hv = oracle.apply(&v.values)?;
    ParamVector::new(hv, v.layout.clone())
}

/// Assemble `H` column by column from basis-vector products.
pub fn dense_hessian<O: Objective>(oracle: &HvpOracle<O>, dim: usize) -> Result<Mat<f64>> {
    if dim > DENSE_HESSIAN_CAP {
        return Err(XqcError::DimensionCap {
            dim,
            cap: DENSE_HESSIAN_CAP,
        });
    }
    if dim != oracle.dim() {
        return Err(crate::error::shape_err("dense_hessian dim", oracle.dim(), dim));
    }
    let cols: Vec<Vec<f64>> = crate::par::map_indices(dim, |j| {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        oracle.apply(&e)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut h = Mat::zeros(dim, dim);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            *h.at_mut(i, j) = col[i];
        }
    }
    let scale = h.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let (a, b) = (h.at(i, j), h.at(j, i));
            if (a - b).abs() > 1e-8 * scale {
                return Err(XqcError::Precondition(format!(
                    "assembled Hessian not symmetric at ({i},{j}): {a} vs {b}"
                )));
            }
            let avg = 0.5 * (a + b);
            *h.at_mut(i, j) = avg;
            *h.at_mut(j, i) = avg;
        }
    }
    Ok(h)
}

/// `½ θᵀ A θ` for a symmetric `A`.
pub struct Quadratic {
    a: Mat<f64>,
    layout: Layout,
}

impl Quadratic {
    pub fn new(a: Mat<f64>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(crate::error::shape_err(
                "Quadratic",
                "square",
                format!("{}x{}", a.rows, a.cols),
            ));
        }
        let layout = ParamVector::flat(vec![0.0; a.rows]).layout;
        Ok(Self { a, layout })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut a = Mat::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            *a.at_mut(i, i) = v;
        }
        Self::new(a).expect("square by construction")
    }
}

impl Objective for Quadratic {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn eval<T: Real>(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        let n = self.a.rows;
        let mut value = T::zero();
        for i in 0..n {
            let row = self.a.row(i);
            let mut ai = T::zero();
            for j in 0..n {
                if row[j] != 0.0 {
                    ai += theta[j].scale(row[j]);
                }
            }
            grad[i] += ai;
            value += (theta[i] * ai).scale(0.5);
        }
        Ok(value)
    }
}

/// `c + gᵀθ`: zero Hessian.
pub struct Affine {
    pub offset: f64,
    pub slope: Vec<f64>,
    layout: Layout,
}

impl Affine {
    pub fn new(offset: f64, slope: Vec<f64>) -> Self {
        let layout = ParamVector::flat(vec![0.0; slope.len()]).layout;
        Self { offset, slope, layout }
    }
}

impl Objective for Affine {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn eval<T: Real>(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        let mut v = T::cst(self.offset);
        for ((g, &t), &s) in grad.iter_mut().zip(theta).zip(&self.slope) {
            v += t.scale(s);
            *g += T::cst(s);
        }
        Ok(v)
    }
}

/// Regression or classification target attached to a network loss.
#[derive(Clone, Debug)]
pub enum LossTarget {
    /// Per-row categorical distribution (rows × atoms).
    Categorical(Mat<f64>),
    /// Per-row scalar.
    Scalar(Vec<f64>),
}

impl LossTarget {
    pub fn rows(&self) -> usize {
        match self {
            LossTarget::Categorical(m) => m.rows,
            LossTarget::Scalar(v) => v.len(),
        }
    }
}

/// Critic loss of a [`Chain`] on a fixed input batch.
///
/// The loss is applied to the first `target.rows()` rows of the output; any
/// further input rows only participate through batch statistics.
#[derive(Clone, Debug)]
pub struct NetLoss {
    pub net: Chain,
    pub inputs: Mat<f64>,
    pub target: LossTarget,
    pub mode: Mode,
}

impl NetLoss {
    pub fn new(net: Chain, inputs: Mat<f64>, target: LossTarget, mode: Mode) -> Result<Self> {
        if target.rows() == 0 || target.rows() > inputs.rows {
            return Err(XqcError::Precondition(format!(
                "loss rows {} must be in 1..={}",
                target.rows(),
                inputs.rows
            )));
        }
        Ok(Self {
            net,
            inputs,
            target,
            mode,
        })
    }
}

impl Objective for NetLoss {
    fn layout(&self) -> &Layout {
        &self.net.layout
    }

    fn eval<T: Real>(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        let x = Mat::<T>::from_f64(&self.inputs);
        let tape = self.net.forward(theta, &x, self.mode)?;
        let (loss, gout) = match &self.target {
            LossTarget::Categorical(t) => cross_entropy(&tape.output, t, t.rows)?,
            LossTarget::Scalar(t) => half_squared_error(&tape.output, t, t.len())?,
        };
        self.net.backward(theta, &tape, gout, grad);
        Ok(loss)
    }
}
