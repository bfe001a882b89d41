use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip_action, wrap_angle, Env, StepResult, EPISODE_LIMIT};
use crate::error::{Result, XqcError};

fn finish(obs: Vec<f64>, reward: f64, steps: usize) -> Result<StepResult> {
    if obs.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
        return Err(XqcError::NonFinite("observation".into()));
    }
    Ok(StepResult {
        obs,
        reward,
        terminated: false,
        truncated: steps >= EPISODE_LIMIT,
    })
}

/// Torque-limited swing-up; `φ = 0` is upright.
///
/// `φ̈ = (3g / 2l) sin φ + (3 / m l²) τ` with `g = 10`, `l = m = 1` and
/// `τ = 2u`, so `φ̈ = 15 sin φ + 6u`. Angular velocity is clipped to ±8.
#[derive(Clone, Debug, Default)]
pub struct Pendulum {
    pub phi: f64,
    pub phi_dot: f64,
    steps: usize,
}

impl Pendulum {
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const GRAVITY_GAIN: f64 = 15.0;
    pub const TORQUE_GAIN: f64 = 6.0;

    pub fn with_state(phi: f64, phi_dot: f64) -> Self {
        Self { phi, phi_dot, steps: 0 }
    }
}

impl Env for Pendulum {
    fn obs_dim(&self) -> usize {
        3
    }
    fn act_dim(&self) -> usize {
        1
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = std::f64::consts::PI;
        self.phi = rng.random_range(-pi..=pi);
        self.phi_dot = rng.random_range(-1.0..=1.0);
        self.steps = 0;
        self.observe()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let u = clip_action(action, 1)?[0];
        let th = wrap_angle(self.phi);
        let reward = -(th * th + 0.1 * self.phi_dot * self.phi_dot + 0.001 * u * u);
        let acc = Self::GRAVITY_GAIN * self.phi.sin() + Self::TORQUE_GAIN * u;
        self.phi_dot = (self.phi_dot + Self::DT * acc).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.phi += Self::DT * self.phi_dot;
        self.steps += 1;
        finish(self.observe(), reward, self.steps)
    }
    fn observe(&self) -> Vec<f64> {
        vec![self.phi.cos(), self.phi.sin(), self.phi_dot]
    }
}

/// Point mass `ẍ = u` between walls at ±5 with speed limit ±2.
#[derive(Clone, Debug, Default)]
pub struct DoubleIntegrator {
    pub x: f64,
    pub v: f64,
    steps: usize,
}

impl DoubleIntegrator {
    pub const DT: f64 = 0.1;
    pub const X_MAX: f64 = 5.0;
    pub const V_MAX: f64 = 2.0;
}

impl Env for DoubleIntegrator {
    fn obs_dim(&self) -> usize {
        2
    }
    fn act_dim(&self) -> usize {
        1
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.x = rng.random_range(-2.0..=2.0);
        self.v = rng.random_range(-0.5..=0.5);
        self.steps = 0;
        self.observe()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let u = clip_action(action, 1)?[0];
        let reward = -(self.x * self.x + 0.25 * self.v * self.v + 0.01 * u * u);
        self.v = (self.v + Self::DT * u).clamp(-Self::V_MAX, Self::V_MAX);
        self.x += Self::DT * self.v;
        if self.x.abs() > Self::X_MAX {
            self.x = self.x.clamp(-Self::X_MAX, Self::X_MAX);
            self.v = 0.0;
        }
        self.steps += 1;
        finish(self.observe(), reward, self.steps)
    }
    fn observe(&self) -> Vec<f64> {
        vec![self.x, self.v]
    }
}

/// Planar two-link arm with unit links driven at the velocity level
/// (`q̇ = 2u` rad/s) towards a fixed target.
#[derive(Clone, Debug, Default)]
pub struct Reacher2 {
    pub q: [f64; 2],
    pub target: [f64; 2],
    steps: usize,
}

impl Reacher2 {
    pub const DT: f64 = 0.05;
    pub const RATE: f64 = 2.0;

    pub fn effector(q: [f64; 2]) -> [f64; 2] {
        [q[0].cos() + (q[0] + q[1]).cos(), q[0].sin() + (q[0] + q[1]).sin()]
    }
}

impl Env for Reacher2 {
    fn obs_dim(&self) -> usize {
        6
    }
    fn act_dim(&self) -> usize {
        2
    }
    fn steps(&self) -> usize {
        self.steps
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = std::f64::consts::PI;
        self.q = [rng.random_range(-pi..=pi), rng.random_range(-pi..=pi)];
        let r: f64 = rng.random_range(0.5..=1.8);
        let a: f64 = rng.random_range(-pi..=pi);
        self.target = [r * a.cos(), r * a.sin()];
        self.steps = 0;
        self.observe()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let u = clip_action(action, 2)?;
        let e = Self::effector(self.q);
        let d = ((e[0] - self.target[0]).powi(2) + (e[1] - self.target[1]).powi(2)).sqrt();
        let reward = -(d + 0.01 * (u[0] * u[0] + u[1] * u[1]));
        for j in 0..2 {
            self.q[j] = wrap_angle(self.q[j] + Self::DT * Self::RATE * u[j]);
        }
        self.steps += 1;
        finish(self.observe(), reward, self.steps)
    }
    fn observe(&self) -> Vec<f64> {
        let e = Self::effector(self.q);
        vec![
            self.q[0].cos(),
            self.q[0].sin(),
            self.q[1].cos(),
            self.q[1].sin(),
            self.target[0] - e[0],
            self.target[1] - e[1],
        ]
    }
}
