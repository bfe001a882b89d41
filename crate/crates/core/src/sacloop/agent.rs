use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::Adam;
use super::config::TrainerConfig;
use super::replay::Batch;
use crate::diffcore::loss::{cross_entropy, half_squared_error};
use crate::diffcore::policy::{squashed_backward, squashed_sample, SquashedSample};
use crate::diffcore::{LossTarget, Mat, Mode, NetLoss, ParamVector};
use crate::distcrit::{bellman_atoms, mean_min_index, project_into, softmax, CategoricalSupport};
use crate::error::{Result, XqcError};
use crate::netlib::{project_in_place, ArchitectureConfig, CriticLoss, CriticNetwork, Networks};

/// What one critic update reports.
#[derive(Clone, Debug)]
pub struct CriticDiag {
    pub loss: f64,
    /// Gradient of the first critic before the optimizer step.
    pub grad: ParamVector,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct ActorDiag {
    pub actor_loss: f64,
    pub entropy: f64,
    pub alpha: f64,
    /// `∂/∂log α` of the temperature loss at the pre-update α.
    pub alpha_grad: f64,
}

/// Online and target networks plus optimizer state.
#[derive(Clone, Debug)]
pub struct Agent {
    pub nets: Networks,
    pub targets: [CriticNetwork; 2],
    pub target_params: [ParamVector; 2],
    pub log_alpha: f64,
    pub support: Option<CategoricalSupport>,
    pub gamma: f64,
    pub target_entropy: f64,
    pub cfg: TrainerConfig,
    critic_opt: [Adam; 2],
    actor_opt: Adam,
    alpha_opt: Adam,
    pub critic_updates: u64,
}

fn stack_sa(s: &Mat<f64>, a: &Mat<f64>) -> Mat<f64> {
    s.hstack(a)
}

fn standard_normal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat<f64> {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
    )
}

impl Agent {
    pub fn new(nets: Networks, cfg: TrainerConfig, gamma: f64) -> Result<Self> {
        let arch = &nets.config;
        let support = match arch.critic_loss {
            CriticLoss::CrossEntropy => Some(CategoricalSupport::new(arch.atoms, arch.v_min, arch.v_max)?),
            CriticLoss::Mse => None,
        };
        let betas = cfg.adam_betas;
        let eps = cfg.adam_eps;
        let act_dim = nets.actor.act_dim;
        Ok(Self {
            targets: nets.critics.clone(),
            target_params: nets.critic_params.clone(),
            log_alpha: cfg.init_temperature.ln(),
            support,
            gamma,
            target_entropy: cfg.target_entropy_for(act_dim),
            critic_opt: [
                Adam::new(nets.critic_params[0].len(), betas, eps),
                Adam::new(nets.critic_params[1].len(), betas, eps),
            ],
            actor_opt: Adam::new(nets.actor_params.len(), betas, eps),
            alpha_opt: Adam::new(1, betas, eps),
            critic_updates: 0,
            cfg,
            nets,
        })
    }

    pub fn arch(&self) -> &ArchitectureConfig {
        &self.nets.config
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Stochastic squashed-Gaussian actions for every row of `s` (eval-mode
    /// actor), with the given standard-normal noise.
    pub fn sample_actions(&self, s: &Mat<f64>, noise: &Mat<f64>) -> Result<Vec<SquashedSample>> {
        let out = self.nets.actor.run(&self.nets.actor_params, s, Mode::Eval)?;
        Ok((0..s.rows)
            .map(|r| squashed_sample(out.mean.row(r), out.log_std.row(r), noise.row(r)))
            .collect())
    }

    /// Mean of the tanh-squashed policy, `tanh(μ)`.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let s = Mat::from_vec(1, obs.len(), obs.to_vec());
        let out = self.nets.actor.run(&self.nets.actor_params, &s, Mode::Eval)?;
        Ok(out.mean.row(0).iter().map(|m| m.tanh()).collect())
    }

    pub fn explore_action<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let s = Mat::from_vec(1, obs.len(), obs.to_vec());
        let noise = standard_normal(1, self.nets.actor.act_dim, rng);
        Ok(self.sample_actions(&s, &noise)?.remove(0).action)
    }

    /// Per-row scalar value of critic outputs (mean of the distribution
    /// for categorical heads).
    fn values(&self, out: &Mat<f64>) -> Result<(Vec<f64>, Option<Vec<Vec<f64>>>)> {
        match &self.support {
            Some(sup) => {
                let mut v = Vec::with_capacity(out.rows);
                let mut probs = Vec::with_capacity(out.rows);
                for r in 0..out.rows {
                    let p = softmax(out.row(r))?;
                    v.push(p.iter().zip(sup.atoms()).map(|(a, z)| a * z).sum());
                    probs.push(p);
                }
                Ok((v, Some(probs)))
            }
            None => Ok((out.data.clone(), None)),
        }
    }

    /// Bootstrapped targets from next-state critic outputs `next[i]` of both
    /// critics, the rescaled rewards, and the entropy term `α log π(a'|s')`.
    pub fn build_targets(
        &self,
        next: [&Mat<f64>; 2],
        r_hat: &[f64],
        done: &[bool],
        log_prob: &[f64],
        alpha: f64,
    ) -> Result<LossTarget> {
        let n = r_hat.len();
        match &self.support {
            Some(sup) => {
                let m = sup.len();
                let mut t = Mat::zeros(n, m);
                for r in 0..n {
                    let p0 = softmax(next[0].row(r))?;
                    let p1 = softmax(next[1].row(r))?;
                    let p = if mean_min_index(&p0, &p1, sup) == 0 { p0 } else { p1 };
                    let atoms = bellman_atoms(r_hat[r], self.gamma, done[r], alpha * log_prob[r], sup);
                    project_into(&atoms, &p, sup, t.row_mut(r));
                }
                Ok(LossTarget::Categorical(t))
            }
            None => {
                let y = (0..n)
                    .map(|r| {
                        let q = next[0].data[r].min(next[1].data[r]);
                        let g = if done[r] { 0.0 } else { self.gamma };
                        r_hat[r] + g * (q - alpha * log_prob[r])
                    })
                    .collect();
                Ok(LossTarget::Scalar(y))
            }
        }
    }

    fn target_outputs(&self, sa2: &Mat<f64>) -> Result<[Mat<f64>; 2]> {
        let o0 = self.targets[0].tape(&self.target_params[0], sa2, Mode::Eval)?.output;
        let o1 = self.targets[1].tape(&self.target_params[1], sa2, Mode::Eval)?.output;
        Ok([o0, o1])
    }

    /// One critic step on both critics: joint train-mode pass over
    /// `[(s, a); (s', a')]`, loss on the first half, Adam, projection, and
    /// the Polyak target update.
    pub fn critic_update<R: Rng>(&mut self, batch: &Batch, r_hat: &[f64], lr: f64, rng: &mut R) -> Result<CriticDiag> {
        let n = batch.len();
        if n < 2 {
            return Err(XqcError::Precondition("critic batch must have >= 2 rows".into()));
        }
        let alpha = self.alpha();
        let noise = standard_normal(n, self.nets.actor.act_dim, rng);
        let next = self.sample_actions(&batch.s2, &noise)?;
        let a2 = Mat::from_vec(
            n,
            self.nets.actor.act_dim,
            next.iter().flat_map(|s| s.action.clone()).collect(),
        );
        let log_prob: Vec<f64> = next.iter().map(|s| s.log_prob).collect();
        let sa = stack_sa(&batch.s, &batch.a);
        let sa2 = stack_sa(&batch.s2, &a2);
        let joint = sa.vstack(&sa2);

        let mut tapes = Vec::with_capacity(2);
        for i in 0..2 {
            tapes.push(self.nets.critics[i].tape(&self.nets.critic_params[i], &joint, Mode::Train)?);
        }
        let target = if self.cfg.target_net {
            let [o0, o1] = self.target_outputs(&sa2)?;
            self.build_targets([&o0, &o1], r_hat, &batch.done, &log_prob, alpha)?
        } else {
            let o0 = tapes[0].output.slice_rows(n, 2 * n);
            let o1 = tapes[1].output.slice_rows(n, 2 * n);
            self.build_targets([&o0, &o1], r_hat, &batch.done, &log_prob, alpha)?
        };

        let mut total = 0.0;
        let mut grad0 = None;
        for (i, tape) in tapes.iter().enumerate() {
            let (loss, gout) = match &target {
                LossTarget::Categorical(t) => cross_entropy(&tape.output, t, n)?,
                LossTarget::Scalar(t) => half_squared_error(&tape.output, t, n)?,
            };
            if !loss.is_finite() {
                return Err(XqcError::NonFinite(format!(
                    "critic {i} loss at update {}",
                    self.critic_updates
                )));
            }
            total += loss;
            let theta = &self.nets.critic_params[i];
            let mut g = vec![0.0; theta.len()];
            self.nets.critics[i].chain.backward(&theta.values, tape, gout, &mut g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(XqcError::NonFinite(format!("critic {i} gradient")));
            }
            self.nets.critics[i].chain.update_running_stats(tape);
            let params = &mut self.nets.critic_params[i];
            self.critic_opt[i].step(&mut params.values, &g, lr);
            if self.nets.config.weight_projection {
                project_in_place(params, self.nets.config.projection)?;
            }
            if i == 0 {
                grad0 = Some(ParamVector {
                    values: g,
                    layout: params.layout.clone(),
                });
            }
        }
        self.polyak();
        self.critic_updates += 1;
        Ok(CriticDiag {
            loss: total / 2.0,
            grad: grad0.expect("two critics"),
            lr,
        })
    }

    /// `target ← (1 − τ) target + τ online` for parameters and BN statistics.
    pub fn polyak(&mut self) {
        let tau = self.cfg.target_momentum;
        for i in 0..2 {
            for (t, o) in self.target_params[i]
                .values
                .iter_mut()
                .zip(&self.nets.critic_params[i].values)
            {
                *t = (1.0 - tau) * *t + tau * o;
            }
            let online = &self.nets.critics[i].chain.stats;
            for (ts, os) in self.targets[i].chain.stats.iter_mut().zip(online) {
                for (t, o) in ts.mean.iter_mut().zip(&os.mean) {
                    *t = (1.0 - tau) * *t + tau * o;
                }
                for (t, o) in ts.var.iter_mut().zip(&os.var) {
                    *t = (1.0 - tau) * *t + tau * o;
                }
            }
        }
    }

    /// Actor step (critics in eval mode) followed by the temperature step.
    pub fn actor_and_temperature_update<R: Rng>(&mut self, s: &Mat<f64>, lr: f64, rng: &mut R) -> Result<ActorDiag> {
        let n = s.rows;
        let ad = self.nets.actor.act_dim;
        let od = self.nets.actor.obs_dim;
        let alpha = self.alpha();
        let out = self.nets.actor.run(&self.nets.actor_params, s, Mode::Train)?;
        self.nets.actor.chain.update_running_stats(&out.tape);
        let noise = standard_normal(n, ad, rng);
        let samples: Vec<SquashedSample> = (0..n)
            .map(|r| squashed_sample(out.mean.row(r), out.log_std.row(r), noise.row(r)))
            .collect();
        let a = Mat::from_vec(n, ad, samples.iter().flat_map(|x| x.action.clone()).collect());
        let sa = stack_sa(s, &a);

        let mut tapes = Vec::with_capacity(2);
        let mut vals = Vec::with_capacity(2);
        for i in 0..2 {
            let tape = self.nets.critics[i].tape(&self.nets.critic_params[i], &sa, Mode::Eval)?;
            vals.push(self.values(&tape.output)?);
            tapes.push(tape);
        }
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut gouts = [Mat::zeros(n, tapes[0].output.cols), Mat::zeros(n, tapes[1].output.cols)];
        for r in 0..n {
            let k = if vals[1].0[r] < vals[0].0[r] { 1 } else { 0 };
            let q = vals[k].0[r];
            loss += (alpha * samples[r].log_prob - q) * inv_n;
            // ∂loss/∂q = −1/n, pushed through the value readout
            match (&self.support, &vals[k].1) {
                (Some(sup), Some(probs)) => {
                    let p = &probs[r];
                    for (j, z) in sup.atoms().iter().enumerate() {
                        *gouts[k].at_mut(r, j) = -inv_n * p[j] * (z - q);
                    }
                }
                _ => *gouts[k].at_mut(r, 0) = -inv_n,
            }
        }
        let mut d_action = Mat::zeros(n, ad);
        for (i, gout) in gouts.into_iter().enumerate() {
            let theta = &self.nets.critic_params[i];
            let mut scratch = vec![0.0; theta.len()];
            let gx = self.nets.critics[i]
                .chain
                .backward(&theta.values, &tapes[i], gout, &mut scratch);
            for r in 0..n {
                for j in 0..ad {
                    *d_action.at_mut(r, j) += gx.at(r, od + j);
                }
            }
        }
        let mut d_mean = Mat::zeros(n, ad);
        let mut d_log_std = Mat::zeros(n, ad);
        for r in 0..n {
            let (dm, dl) = squashed_backward(&samples[r], alpha * inv_n, d_action.row(r));
            d_mean.row_mut(r).copy_from_slice(&dm);
            d_log_std.row_mut(r).copy_from_slice(&dl);
        }
        let g = self
            .nets
            .actor
            .backward(&self.nets.actor_params, &out, &d_mean, &d_log_std);
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(XqcError::NonFinite("actor loss".into()));
        }
        self.actor_opt.step(&mut self.nets.actor_params.values, &g, lr);
        if self.nets.config.weight_projection {
            project_in_place(&mut self.nets.actor_params, self.nets.config.projection)?;
        }

        let mean_lp = samples.iter().map(|x| x.log_prob).sum::<f64>() * inv_n;
        let alpha_grad = alpha * (-mean_lp - self.target_entropy);
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[alpha_grad], self.cfg.temp_lr);
        self.log_alpha = la[0];
        Ok(ActorDiag {
            actor_loss: loss,
            entropy: -mean_lp,
            alpha,
            alpha_grad,
        })
    }

    /// Critic-0 loss on a fixed batch with eval-mode BN; the objective whose
    /// Hessian the spectral diagnostics analyze.
    pub fn hessian_objective(&self, probe: &Batch, r_hat: &[f64], noise: &Mat<f64>) -> Result<NetLoss> {
        let alpha = self.alpha();
        let next = self.sample_actions(&probe.s2, noise)?;
        let n = probe.len();
        let a2 = Mat::from_vec(
            n,
            self.nets.actor.act_dim,
            next.iter().flat_map(|s| s.action.clone()).collect(),
        );
        let log_prob: Vec<f64> = next.iter().map(|s| s.log_prob).collect();
        let sa2 = stack_sa(&probe.s2, &a2);
        let [o0, o1] = if self.cfg.target_net {
            self.target_outputs(&sa2)?
        } else {
            [
                self.nets.critics[0]
                    .tape(&self.nets.critic_params[0], &sa2, Mode::Eval)?
                    .output,
                self.nets.critics[1]
                    .tape(&self.nets.critic_params[1], &sa2, Mode::Eval)?
                    .output,
            ]
        };
        let target = self.build_targets([&o0, &o1], r_hat, &probe.done, &log_prob, alpha)?;
        NetLoss::new(
            self.nets.critics[0].chain.clone(),
            stack_sa(&probe.s, &probe.a),
            target,
            Mode::Eval,
        )
    }

    /// Critic-0 outputs on `sa` in eval mode.
    pub fn critic_outputs(&self, sa: &Mat<f64>) -> Result<Mat<f64>> {
        Ok(self.nets.critics[0]
            .tape(&self.nets.critic_params[0], sa, Mode::Eval)?
            .output)
    }
}

pub(crate) fn noise_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat<f64> {
    standard_normal(rows, cols, rng)
}
