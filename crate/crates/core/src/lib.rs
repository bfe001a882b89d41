//! Well-conditioned distributional actor-critic (batch normalization, weight
//! projection, categorical cross-entropy critic) together with the Hessian
//! spectrum and plasticity diagnostics used to study its critic landscape.

pub mod diffcore;
pub mod distcrit;
pub mod envs;
pub mod error;
pub mod netlib;
pub mod par;
pub mod sacloop;
pub mod spectra;

pub use error::{Result, XqcError};
