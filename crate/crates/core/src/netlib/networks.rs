//! Critic and actor construction for every architecture cell.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ArchitectureConfig, CriticLoss, NormKind};
use crate::diffcore::{Chain, ChainBuilder, Mat, Mode, ParamRole, ParamVector, Tape};
use crate::error::{Result, XqcError};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const HEAD_INIT_RANGE: f64 = 3e-3;
pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;

/// A critic: (s, a) ↦ logits over the support (CE) or a scalar (MSE).
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNetwork {
    pub chain: Chain,
    pub loss: CriticLoss,
    pub obs_dim: usize,
    pub act_dim: usize,
}

impl CriticNetwork {
    pub fn out_dim(&self) -> usize {
        self.chain.out_dim
    }

    pub fn tape(&self, theta: &ParamVector, sa: &Mat<f64>, mode: Mode) -> Result<Tape<f64>> {
        theta.check_layout(&self.chain.layout)?;
        self.chain.forward(&theta.values, sa, mode)
    }
}

/// A squashed-Gaussian actor: s ↦ (mean, log-std) per action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorNetwork {
    pub chain: Chain,
    pub obs_dim: usize,
    pub act_dim: usize,
}

/// Actor head output after the log-std clamp.
#[derive(Clone, Debug)]
pub struct ActorOutput {
    pub mean: Mat<f64>,
    pub log_std: Mat<f64>,
    /// `true` where the raw log-std fell outside `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub clamped: Vec<bool>,
    pub tape: Tape<f64>,
}

impl ActorNetwork {
    pub fn run(&self, theta: &ParamVector, s: &Mat<f64>, mode: Mode) -> Result<ActorOutput> {
        theta.check_layout(&self.chain.layout)?;
        let tape = self.chain.forward(&theta.values, s, mode)?;
        let n = s.rows;
        let a = self.act_dim;
        let mut mean = Mat::zeros(n, a);
        let mut log_std = Mat::zeros(n, a);
        let mut clamped = vec![false; n * a];
        for r in 0..n {
            let row = tape.output.row(r);
            for j in 0..a {
                *mean.at_mut(r, j) = row[j];
                let raw = row[a + j];
                let c = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[r * a + j] = c != raw;
                *log_std.at_mut(r, j) = c;
            }
        }
        Ok(ActorOutput {
            mean,
            log_std,
            clamped,
            tape,
        })
    }

    /// Reverse pass from `(∂/∂mean, ∂/∂log_std)` into `∂/∂θ`.
    pub fn backward(
        &self,
        theta: &ParamVector,
        out: &ActorOutput,
        d_mean: &Mat<f64>,
        d_log_std: &Mat<f64>,
    ) -> Vec<f64> {
        let n = out.mean.rows;
        let a = self.act_dim;
        let mut g = Mat::zeros(n, 2 * a);
        for r in 0..n {
            for j in 0..a {
                *g.at_mut(r, j) = d_mean.at(r, j);
                if !out.clamped[r * a + j] {
                    *g.at_mut(r, a + j) = d_log_std.at(r, j);
                }
            }
        }
        let mut grad = vec![0.0; theta.len()];
        self.chain.backward(&theta.values, &out.tape, g, &mut grad);
        grad
    }
}

/// Both critics, the actor, and their packed parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub config: ArchitectureConfig,
    pub critics: [CriticNetwork; 2],
    pub critic_params: [ParamVector; 2],
    pub actor: ActorNetwork,
    pub actor_params: ParamVector,
}

fn body(b: &mut ChainBuilder, norm: NormKind, input_norm: bool, width: usize, blocks: usize) {
    if input_norm && norm == NormKind::Batch {
        b.batch_norm("in_bn");
    }
    for i in 0..blocks {
        let id = format!("h{i}");
        b.linear(&id, width, true);
        match norm {
            NormKind::Batch => {
                b.batch_norm(&format!("{id}_bn"));
            }
            NormKind::Layer => {
                b.layer_norm(&format!("{id}_ln"));
            }
            NormKind::None => {}
        }
        b.relu();
    }
}

pub fn critic_chain(config: &ArchitectureConfig, obs_dim: usize, act_dim: usize) -> Chain {
    let mut b = ChainBuilder::new(obs_dim + act_dim, config.bn_momentum);
    body(&mut b, config.norm, true, config.hidden_dim, config.num_blocks);
    let out = match config.critic_loss {
        CriticLoss::CrossEntropy => config.atoms,
        CriticLoss::Mse => 1,
    };
    b.linear("head", out, false);
    b.build()
}

pub fn actor_chain(config: &ArchitectureConfig, obs_dim: usize, act_dim: usize) -> Chain {
    let mut b = ChainBuilder::new(obs_dim, config.bn_momentum);
    body(
        &mut b,
        config.norm,
        config.actor_input_norm,
        config.actor_hidden_dim,
        config.actor_blocks,
    );
    b.linear("head", 2 * act_dim, false);
    b.build()
}

/// Orthogonal `rows × cols` matrix scaled by `gain`.
fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Vec<f64> {
    let (r, c) = if rows < cols { (cols, rows) } else { (rows, cols) };
    let g = DMatrix::<f64>::from_fn(r, c, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for j in 0..c {
        if rmat[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows < cols { q[(j, i)] } else { q[(i, j)] };
            out[i * cols + j] = gain * v;
        }
    }
    out
}

/// Deterministic initialization of a chain's parameters.
pub fn init_params(chain: &Chain, rng: &mut ChaCha8Rng) -> ParamVector {
    let mut p = ParamVector::zeros(chain.layout.clone());
    let entries = chain.layout.entries().to_vec();
    for e in &entries {
        match e.role {
            ParamRole::Weight if e.layer_id == "head" => {
                for v in p.slice_mut(e) {
                    *v = rng.random_range(-HEAD_INIT_RANGE..HEAD_INIT_RANGE);
                }
            }
            ParamRole::Weight => {
                let w = orthogonal(rng, e.rows, e.cols, HIDDEN_GAIN);
                p.slice_mut(e).copy_from_slice(&w);
            }
            ParamRole::Scale => p.slice_mut(e).iter_mut().for_each(|v| *v = 1.0),
            ParamRole::Bias | ParamRole::Shift => {}
        }
    }
    p
}

/// Build two critics and an actor, deterministically from `seed`.
pub fn build(config: &ArchitectureConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Networks> {
    config.validate()?;
    if obs_dim == 0 || act_dim == 0 {
        return Err(XqcError::Config("obs_dim and act_dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let critic = |rng: &mut ChaCha8Rng| {
        let chain = critic_chain(config, obs_dim, act_dim);
        let params = init_params(&chain, rng);
        (
            CriticNetwork {
                chain,
                loss: config.critic_loss,
                obs_dim,
                act_dim,
            },
            params,
        )
    };
    let (c0, mut p0) = critic(&mut rng);
    let (c1, mut p1) = critic(&mut rng);
    let achain = actor_chain(config, obs_dim, act_dim);
    let mut ap = init_params(&achain, &mut rng);
    if config.weight_projection {
        p0 = super::project::project_weights(&p0, config.projection)?;
        p1 = super::project::project_weights(&p1, config.projection)?;
        ap = super::project::project_weights(&ap, config.projection)?;
    }
    Ok(Networks {
        config: config.clone(),
        critics: [c0, c1],
        critic_params: [p0, p1],
        actor: ActorNetwork {
            chain: achain,
            obs_dim,
            act_dim,
        },
        actor_params: ap,
    })
}

/// Critic output on an `(s, a)` batch. Train mode uses batch statistics and
/// folds them into the running statistics.
pub fn critic_forward(net: &mut CriticNetwork, theta: &ParamVector, sa: &Mat<f64>, mode: Mode) -> Result<Mat<f64>> {
    let tape = net.tape(theta, sa, mode)?;
    net.chain.update_running_stats(&tape);
    Ok(tape.output)
}

/// Actor `(mean, clamped log-std)`; train mode updates running statistics.
pub fn actor_forward(
    net: &mut ActorNetwork,
    theta: &ParamVector,
    s: &Mat<f64>,
    mode: Mode,
) -> Result<(Mat<f64>, Mat<f64>)> {
    let out = net.run(theta, s, mode)?;
    net.chain.update_running_stats(&out.tape);
    Ok((out.mean, out.log_std))
}
