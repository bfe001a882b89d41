//! Small deterministic continuous-control tasks.
//!
//! | task                | obs | act | per-step reward range                 |
//! |---------------------|-----|-----|---------------------------------------|
//! | `pendulum`          | 3   | 1   | `[-(π² + 6.4 + 0.001), 0]`            |
//! | `double_integrator` | 2   | 1   | `[-(25 + 1 + 0.01), 0]`               |
//! | `reacher2`          | 6   | 2   | `[-(4 + 0.02), 0]`                    |
//!
//! All tasks integrate with semi-implicit Euler, clip actions to `[-1, 1]`,
//! and truncate after [`EPISODE_LIMIT`] steps without terminating.

mod anchors;
mod tasks;

pub use anchors::{anchors, measure_anchor, reference_action, Anchors, ANCHOR_EPISODES};
pub use tasks::{DoubleIntegrator, Pendulum, Reacher2};

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, XqcError};

pub const EPISODE_LIMIT: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn limit(&self) -> usize {
        EPISODE_LIMIT
    }
    fn steps(&self) -> usize;
    /// Sample an initial state from `seed` and return its observation.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    fn observe(&self) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Pendulum,
    DoubleIntegrator,
    Reacher2,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Pendulum, Task::DoubleIntegrator, Task::Reacher2];

    pub fn name(self) -> &'static str {
        match self {
            Task::Pendulum => "pendulum",
            Task::DoubleIntegrator => "double_integrator",
            Task::Reacher2 => "reacher2",
        }
    }

    pub fn make(self) -> Box<dyn Env> {
        match self {
            Task::Pendulum => Box::new(Pendulum::default()),
            Task::DoubleIntegrator => Box::new(DoubleIntegrator::default()),
            Task::Reacher2 => Box::new(Reacher2::default()),
        }
    }

    pub fn obs_dim(self) -> usize {
        self.make().obs_dim()
    }

    pub fn act_dim(self) -> usize {
        self.make().act_dim()
    }

    /// Normalize a return with the task's (random, reference) anchors.
    pub fn normalize(self, ret: f64) -> f64 {
        let a = anchors(self);
        (ret - a.random) / (a.reference - a.random)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = XqcError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pendulum" => Ok(Task::Pendulum),
            "double_integrator" => Ok(Task::DoubleIntegrator),
            "reacher2" => Ok(Task::Reacher2),
            other => Err(XqcError::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Validate and clip an action.
pub(crate) fn clip_action(action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(crate::error::shape_err("action", dim, action.len()));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(XqcError::NonFinite("action".into()));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    (x + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
}
