//! Minimal dense differentiation engine: per-layer primitives with
//! hand-written reverse rules, exact gradients, and Hessian-vector products
//! by running the reverse pass in dual numbers.

pub mod hvp;
pub mod layers;
pub mod loss;
pub mod mat;
pub mod params;
pub mod policy;
pub mod real;

pub use hvp::{dense_hessian, hvp, value_and_grad, Affine, HvpOracle, LossTarget, NetLoss, Objective, Quadratic};
pub use layers::{Chain, ChainBuilder, Layer, Mode, NodeCache, RunningStats, Tape, NORM_EPS};
pub use mat::Mat;
pub use params::{dot, l2, Layout, LayoutBuilder, LayoutEntry, ParamRole, ParamVector};
pub use real::{Dual, Real};
