use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{noise_matrix, ActorDiag, Agent, CriticDiag};
use super::config::{scheduled_lr, TrainerConfig};
use super::replay::{Batch, ReplayBuffer, Transition};
use super::reward::RewardNormalizer;
use crate::diffcore::{l2, Mat, NetLoss, ParamRole, ParamVector};
use crate::distcrit::{certify_elr_bound, ElrReport, ElrStep, LayerUpdate};
use crate::envs::{Env, Task};
use crate::error::{Result, XqcError};
use crate::netlib::{build, config_hash, ArchitectureConfig, Checkpoint, CriticLoss, Precision};
use crate::spectra::plasticity_probe;

/// Stream ids for [`derive_seed`].
const STREAM_ACT: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_RESET: u64 = 4;
const STREAM_EVAL: u64 = 5;
const STREAM_PROBE: u64 = 6;
const STREAM_INIT: u64 = 7;

/// SplitMix64 over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One row of `diag.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagRecord {
    pub step: usize,
    pub param_norm: f64,
    pub projected_norm: f64,
    pub grad_norm: f64,
    pub elr: f64,
    pub temperature: f64,
    pub loss: f64,
}

/// Frozen critic objective at a probe step, ready for spectral analysis.
#[derive(Clone, Debug)]
pub struct ProbeSnapshot {
    pub step: usize,
    pub objective: NetLoss,
    pub theta: ParamVector,
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub task: Task,
    pub arch: ArchitectureConfig,
    pub config: TrainerConfig,
    pub seed: u64,
    pub total_steps: usize,
    pub gamma: f64,
    pub config_text: String,
    /// `(step, episode_return)` of training episodes.
    pub returns: Vec<(usize, f64)>,
    /// `(step, mean deterministic return)`.
    pub evals: Vec<(usize, f64)>,
    pub final_return: f64,
    pub diag: Vec<DiagRecord>,
    pub snapshots: Vec<ProbeSnapshot>,
    pub checkpoints: Vec<(usize, Checkpoint)>,
}

pub fn run_config_text(
    task: Task,
    arch: &ArchitectureConfig,
    cfg: &TrainerConfig,
    total_steps: usize,
    seed: u64,
    gamma: f64,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "task={task}");
    let _ = writeln!(s, "seed={seed}");
    let _ = writeln!(s, "total_steps={total_steps}");
    let _ = writeln!(s, "gamma_resolved={gamma:?}");
    let _ = writeln!(s, "critic_aggregation=mean_min");
    for (k, v) in arch.to_kv().into_iter().chain(cfg.to_kv()) {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

/// Steppable training state.
pub struct Trainer {
    pub task: Task,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub normalizer: RewardNormalizer,
    pub step: usize,
    pub total_steps: usize,
    pub probe: Batch,
    /// Reward scale of the probe batch, fixed at construction.
    pub probe_reward_std: f64,
    pub last_critic: Option<CriticDiag>,
    pub last_actor: Option<ActorDiag>,
    pub returns: Vec<(usize, f64)>,
    pub config_text: String,
    env: Box<dyn Env>,
    obs: Vec<f64>,
    ep_return: f64,
    episodes: u64,
    seed: u64,
    rng_act: ChaCha8Rng,
    rng_sample: ChaCha8Rng,
    rng_noise: ChaCha8Rng,
    probe_noise: Mat<f64>,
}

fn random_action<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Random-policy rollout in a separately seeded environment.
fn probe_rollout(task: Task, n: usize, seed: u64, gamma: f64) -> Result<(Batch, f64)> {
    let mut env = task.make();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PROBE, 0));
    let mut norm = RewardNormalizer::new(gamma);
    let mut ep = 0;
    let mut obs = env.reset(derive_seed(seed, STREAM_PROBE, 1 + ep));
    let mut ts = Vec::with_capacity(n);
    while ts.len() < n {
        let a = random_action(env.act_dim(), &mut rng);
        let st = env.step(&a)?;
        norm.observe(st.reward);
        ts.push(Transition {
            s: obs,
            a,
            r: st.reward,
            s2: st.obs.clone(),
            done: st.terminated,
        });
        obs = st.obs;
        if st.terminated || st.truncated {
            norm.end_episode();
            ep += 1;
            obs = env.reset(derive_seed(seed, STREAM_PROBE, 1 + ep));
        }
    }
    let refs: Vec<&Transition> = ts.iter().collect();
    let std = if norm.std() > RewardNormalizer::EPS {
        norm.std()
    } else {
        1.0
    };
    Ok((Batch::from_transitions(&refs), std))
}

impl Trainer {
    pub fn new(
        task: Task,
        arch: &ArchitectureConfig,
        cfg: &TrainerConfig,
        total_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        arch.validate()?;
        let mut env = task.make();
        let gamma = cfg.gamma_for(env.limit())?;
        let nets = build(arch, env.obs_dim(), env.act_dim(), derive_seed(seed, STREAM_INIT, 0))?;
        let agent = Agent::new(nets, cfg.clone(), gamma)?;
        let (probe, probe_reward_std) = probe_rollout(task, cfg.probe_batch, seed, gamma)?;
        let mut rng_noise = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_NOISE, 0));
        let probe_noise = noise_matrix(cfg.probe_batch, env.act_dim(), &mut rng_noise);
        let obs = env.reset(derive_seed(seed, STREAM_RESET, 0));
        Ok(Self {
            task,
            agent,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            normalizer: RewardNormalizer::new(gamma),
            step: 0,
            total_steps,
            probe,
            probe_reward_std,
            last_critic: None,
            last_actor: None,
            returns: Vec::new(),
            config_text: run_config_text(task, arch, cfg, total_steps, seed, gamma),
            env,
            obs,
            ep_return: 0.0,
            episodes: 0,
            seed,
            rng_act: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_ACT, 0)),
            rng_sample: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SAMPLE, 0)),
            rng_noise,
            probe_noise,
        })
    }

    pub fn cfg(&self) -> &TrainerConfig {
        &self.agent.cfg
    }

    fn decays(&self) -> bool {
        self.cfg().lr_decay && self.agent.arch().weight_projection
    }

    pub fn critic_lr(&self) -> f64 {
        scheduled_lr(self.cfg().critic_lr, self.step, self.total_steps, self.decays())
    }

    pub fn actor_lr(&self) -> f64 {
        scheduled_lr(self.cfg().actor_lr, self.step, self.total_steps, self.decays())
    }

    /// One environment interaction; returns the episode return when an
    /// episode ends.
    pub fn env_step(&mut self) -> Result<Option<f64>> {
        let a = if self.step < self.cfg().warmup_steps {
            random_action(self.env.act_dim(), &mut self.rng_act)
        } else {
            self.agent.explore_action(&self.obs, &mut self.rng_act)?
        };
        let st = self.env.step(&a)?;
        self.normalizer.observe(st.reward);
        let t = Transition {
            s: std::mem::take(&mut self.obs),
            a,
            r: st.reward,
            s2: st.obs.clone(),
            done: st.terminated,
        };
        t.validate()?;
        self.buffer.push(t);
        self.ep_return += st.reward;
        self.obs = st.obs;
        self.step += 1;
        if st.terminated || st.truncated {
            let ret = self.ep_return;
            self.returns.push((self.step, ret));
            self.normalizer.end_episode();
            self.ep_return = 0.0;
            self.episodes += 1;
            self.obs = self.env.reset(derive_seed(self.seed, STREAM_RESET, self.episodes));
            return Ok(Some(ret));
        }
        Ok(None)
    }

    fn rescale(&self, r: &[f64]) -> Vec<f64> {
        if self.cfg().reward_norm {
            r.iter().map(|&x| self.normalizer.scale(x)).collect()
        } else {
            r.to_vec()
        }
    }

    pub fn ready(&self) -> bool {
        self.step >= self.cfg().warmup_steps && self.buffer.len() >= self.cfg().batch
    }

    /// `utd` critic updates with delayed actor/temperature updates; `trace`
    /// collects per-update effective-step records.
    fn updates(&mut self, mut trace: Option<&mut Vec<ElrStep>>) -> Result<()> {
        if !self.ready() {
            return Ok(());
        }
        for _ in 0..self.cfg().utd {
            let batch = self.buffer.sample(self.cfg().batch, &mut self.rng_sample)?;
            let r_hat = self.rescale(&batch.r);
            let lr = self.critic_lr();
            let before = match trace {
                Some(_) => Some((
                    self.agent.critic_outputs(&self.probe.s.hstack(&self.probe.a))?,
                    self.agent.nets.critic_params[0].values.clone(),
                )),
                None => None,
            };
            let diag = self.agent.critic_update(&batch, &r_hat, lr, &mut self.rng_noise)?;
            if let (Some(tr), Some((f0, th0))) = (trace.as_deref_mut(), before) {
                tr.push(self.elr_step(&diag, &f0, &th0)?);
            }
            self.last_critic = Some(diag);
            if self.agent.critic_updates.is_multiple_of(self.cfg().policy_delay as u64) {
                let lr = self.actor_lr();
                let ad = self
                    .agent
                    .actor_and_temperature_update(&batch.s, lr, &mut self.rng_noise)?;
                self.last_actor = Some(ad);
            }
        }
        Ok(())
    }

    fn elr_step(&self, diag: &CriticDiag, f0: &Mat<f64>, th0: &[f64]) -> Result<ElrStep> {
        let theta = &self.agent.nets.critic_params[0];
        let f1 = self.agent.critic_outputs(&self.probe.s.hstack(&self.probe.a))?;
        let dtheta: Vec<f64> = theta.values.iter().zip(th0).map(|(a, b)| a - b).collect();
        let dn = l2(&dtheta);
        let mut ratio = 0.0f64;
        if dn > 0.0 {
            for r in 0..f0.rows {
                let d: Vec<f64> = f1.row(r).iter().zip(f0.row(r)).map(|(a, b)| a - b).collect();
                ratio = ratio.max(l2(&d) / dn);
            }
        }
        let layers = theta
            .layout
            .projected()
            .map(|e| LayerUpdate {
                layer: e.layer_id.clone(),
                grad_norm: l2(diag.grad.slice(e)),
                param_norm: l2(theta.slice(e)),
            })
            .collect();
        Ok(ElrStep {
            lr: diag.lr,
            layers,
            lipschitz_ratio: ratio,
        })
    }

    /// One environment step followed by the scheduled updates.
    pub fn advance(&mut self) -> Result<Option<f64>> {
        let ep = self.env_step()?;
        self.updates(None)?;
        Ok(ep)
    }

    /// Run `window` more steps recording the effective update of every
    /// critic step, then certify the bounded-update inequality.
    pub fn elr_window(&mut self, window: usize) -> Result<ElrReport> {
        let arch = self.agent.arch().clone();
        if !arch.weight_projection || arch.critic_loss != CriticLoss::CrossEntropy {
            return certify_elr_bound(
                &[],
                arch.weight_projection,
                arch.critic_loss == CriticLoss::CrossEntropy,
            );
        }
        let mut trace = Vec::new();
        for _ in 0..window {
            self.env_step()?;
            self.updates(Some(&mut trace))?;
        }
        certify_elr_bound(&trace, true, true)
    }

    /// Mean return of the deterministic policy over `episodes` fixed start
    /// states (reward statistics are not touched).
    pub fn evaluate(&self, episodes: usize) -> Result<f64> {
        let mut env = self.task.make();
        let mut total = 0.0;
        for ep in 0..episodes {
            let mut obs = env.reset(derive_seed(self.seed, STREAM_EVAL, ep as u64));
            loop {
                let a = self.agent.deterministic_action(&obs)?;
                let st = env.step(&a)?;
                total += st.reward;
                obs = st.obs;
                if st.terminated || st.truncated {
                    break;
                }
            }
        }
        Ok(total / episodes as f64)
    }

    pub fn plasticity(&self) -> DiagRecord {
        let rec = plasticity_probe(
            self.step,
            &self.agent.nets.critic_params[0],
            self.last_critic.as_ref().map(|d| &d.grad),
            self.critic_lr(),
        );
        DiagRecord {
            step: rec.step,
            param_norm: rec.param_norm,
            projected_norm: rec.projected_norm,
            grad_norm: rec.grad_norm,
            elr: rec.elr,
            temperature: self.agent.alpha(),
            loss: self.last_critic.as_ref().map_or(0.0, |d| d.loss),
        }
    }

    pub fn snapshot(&self) -> Result<ProbeSnapshot> {
        let r_hat: Vec<f64> = if self.cfg().reward_norm {
            self.probe.r.iter().map(|r| r / self.probe_reward_std).collect()
        } else {
            self.probe.r.clone()
        };
        Ok(ProbeSnapshot {
            step: self.step,
            objective: self.agent.hessian_objective(&self.probe, &r_hat, &self.probe_noise)?,
            theta: self.agent.nets.critic_params[0].clone(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let a = &self.agent;
        let mut ck = Checkpoint::new(config_hash(&self.config_text), Precision::F64);
        for i in 0..2 {
            ck.push_params(&format!("critic{i}"), &a.nets.critic_params[i]);
            ck.push_params(&format!("target{i}"), &a.target_params[i]);
        }
        ck.push_params("actor", &a.nets.actor_params);
        let chains = [
            ("critic0", &a.nets.critics[0].chain),
            ("critic1", &a.nets.critics[1].chain),
            ("target0", &a.targets[0].chain),
            ("target1", &a.targets[1].chain),
            ("actor", &a.nets.actor.chain),
        ];
        for (name, chain) in chains {
            for (slot, st) in chain.stats.iter().enumerate() {
                let id = format!("{name}/running{slot}");
                ck.push(&id, ParamRole::Shift, 1, st.mean.len(), &st.mean);
                ck.push(&id, ParamRole::Scale, 1, st.var.len(), &st.var);
            }
        }
        ck.push("log_alpha", ParamRole::Weight, 1, 1, &[a.log_alpha]);
        ck
    }
}

/// Train for `total_steps` environment steps, snapshotting the critic
/// objective at every step listed in `probe_schedule`.
pub fn train(
    task: Task,
    arch: &ArchitectureConfig,
    cfg: &TrainerConfig,
    total_steps: usize,
    seed: u64,
    probe_schedule: &[usize],
) -> Result<RunArtifacts> {
    if let Some(&p) = probe_schedule.iter().find(|&&p| p > total_steps) {
        return Err(XqcError::Config(format!(
            "probe step {p} exceeds total_steps {total_steps}"
        )));
    }
    let mut probes: Vec<usize> = probe_schedule.to_vec();
    probes.sort_unstable();
    probes.dedup();
    let mut tr = Trainer::new(task, arch, cfg, total_steps, seed)?;
    let mut evals = Vec::new();
    let mut diag = Vec::new();
    let mut snapshots = Vec::new();
    let mut checkpoints = Vec::new();
    loop {
        let step = tr.step;
        if probes.binary_search(&step).is_ok() {
            snapshots.push(tr.snapshot()?);
            checkpoints.push((step, tr.checkpoint()));
        } else if step == 0 || step == total_steps {
            checkpoints.push((step, tr.checkpoint()));
        }
        if cfg.diag_every > 0 && (step % cfg.diag_every == 0 || step == total_steps) {
            diag.push(tr.plasticity());
        }
        if step > 0 && cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            evals.push((step, tr.evaluate(cfg.eval_episodes)?));
        }
        if step == total_steps {
            break;
        }
        tr.advance()?;
    }
    let final_return = tr.evaluate(cfg.final_eval_episodes)?;
    Ok(RunArtifacts {
        task,
        arch: arch.clone(),
        config: cfg.clone(),
        seed,
        total_steps,
        gamma: tr.agent.gamma,
        config_text: tr.config_text.clone(),
        returns: tr.returns,
        evals,
        final_return,
        diag,
        snapshots,
        checkpoints,
    })
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

impl RunArtifacts {
    /// Write `config.txt`, `returns.csv`, `eval.csv`, `score.csv`, `diag.csv`, and
    /// `ckpt_<step>.xqc` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), &self.config_text)?;
        let mut s = String::from("step,episode_return\n");
        for (st, r) in &self.returns {
            let _ = writeln!(s, "{st},{}", fmt_num(*r));
        }
        std::fs::write(dir.join("returns.csv"), s)?;
        let mut s = String::from("step,eval_return\n");
        for (st, r) in &self.evals {
            let _ = writeln!(s, "{st},{}", fmt_num(*r));
        }
        std::fs::write(dir.join("eval.csv"), s)?;
        std::fs::write(
            dir.join("score.csv"),
            format!(
                "final_return,normalized_return\n{},{}\n",
                fmt_num(self.final_return),
                fmt_num(self.task.normalize(self.final_return))
            ),
        )?;
        let mut s = String::from("step,param_norm,projected_norm,grad_norm,elr,temperature,loss\n");
        for d in &self.diag {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                d.step,
                fmt_num(d.param_norm),
                fmt_num(d.projected_norm),
                fmt_num(d.grad_norm),
                fmt_num(d.elr),
                fmt_num(d.temperature),
                fmt_num(d.loss)
            );
        }
        std::fs::write(dir.join("diag.csv"), s)?;
        for (step, ck) in &self.checkpoints {
            ck.write(&dir.join(format!("ckpt_{step}.xqc")))?;
        }
        Ok(())
    }
}
