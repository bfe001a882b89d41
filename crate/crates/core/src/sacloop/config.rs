use std::str::FromStr;

use crate::error::{Result, XqcError};

/// `γ = clip(((T/5) − 1)/(T/5), 0.95, 0.995)` with `T = episode_length / action_repeat`.
pub fn discount_heuristic(episode_length: usize, action_repeat: usize) -> Result<f64> {
    if episode_length == 0 || action_repeat == 0 {
        return Err(XqcError::Precondition(
            "episode_length and action_repeat must be >= 1".into(),
        ));
    }
    let t = episode_length as f64 / action_repeat as f64;
    let h = t / 5.0;
    Ok(((h - 1.0) / h).clamp(0.95, 0.995))
}

/// Learning rate at `step` of `total`: linear decay to 10 % when `decay`.
pub fn scheduled_lr(base: f64, step: usize, total: usize, decay: bool) -> f64 {
    if !decay || total == 0 {
        return base;
    }
    let frac = (step as f64 / total as f64).min(1.0);
    base * (1.0 - 0.9 * frac)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub temp_lr: f64,
    pub batch: usize,
    pub utd: usize,
    pub policy_delay: usize,
    pub target_momentum: f64,
    pub init_temperature: f64,
    /// `None` selects `−act_dim / 2`.
    pub target_entropy: Option<f64>,
    /// Linear decay to 10 % over the run; only active with weight projection.
    pub lr_decay: bool,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    /// `None` selects the discount heuristic for the task's episode length.
    pub gamma: Option<f64>,
    pub action_repeat: usize,
    pub reward_norm: bool,
    pub target_net: bool,
    pub probe_batch: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Deterministic-policy episodes averaged into the final score.
    pub final_eval_episodes: usize,
    pub diag_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            critic_lr: 3e-4,
            actor_lr: 3e-4,
            temp_lr: 3e-4,
            batch: 256,
            utd: 2,
            policy_delay: 3,
            target_momentum: 0.005,
            init_temperature: 0.01,
            target_entropy: None,
            lr_decay: true,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            gamma: None,
            action_repeat: 1,
            reward_norm: true,
            target_net: true,
            probe_batch: 256,
            eval_every: 1000,
            eval_episodes: 1,
            final_eval_episodes: 10,
            diag_every: 250,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("critic_lr", self.critic_lr),
            ("actor_lr", self.actor_lr),
            ("temp_lr", self.temp_lr),
            ("target_momentum", self.target_momentum),
            ("init_temperature", self.init_temperature),
            ("adam_eps", self.adam_eps),
        ];
        for (k, v) in pos {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(XqcError::Config(format!("{k} must be finite and >= 0, got {v}")));
            }
        }
        if self.init_temperature <= 0.0 {
            return Err(XqcError::Config("init_temperature must be > 0".into()));
        }
        if self.batch < 2 {
            return Err(XqcError::Config("batch must be >= 2".into()));
        }
        if self.utd < 1 || self.policy_delay < 1 || self.action_repeat < 1 {
            return Err(XqcError::Config("utd, policy_delay, action_repeat must be >= 1".into()));
        }
        if self.buffer_capacity < self.batch {
            return Err(XqcError::Config("buffer_capacity must be >= batch".into()));
        }
        if self.probe_batch < 2 || self.eval_episodes < 1 || self.final_eval_episodes < 1 {
            return Err(XqcError::Config(
                "probe_batch >= 2 and eval_episodes >= 1 required".into(),
            ));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(XqcError::Config(format!("gamma must lie in [0, 1], got {g}")));
            }
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64) / 2.0)
    }

    pub fn gamma_for(&self, episode_length: usize) -> Result<f64> {
        match self.gamma {
            Some(g) => Ok(g),
            None => discount_heuristic(episode_length, self.action_repeat),
        }
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let f = |v: f64| format!("{v:?}");
        vec![
            ("critic_lr".to_string(), f(self.critic_lr)),
            ("actor_lr".into(), f(self.actor_lr)),
            ("temp_lr".into(), f(self.temp_lr)),
            ("batch".into(), self.batch.to_string()),
            ("utd".into(), self.utd.to_string()),
            ("policy_delay".into(), self.policy_delay.to_string()),
            ("target_momentum".into(), f(self.target_momentum)),
            ("init_temperature".into(), f(self.init_temperature)),
            (
                "target_entropy".into(),
                self.target_entropy.map(f).unwrap_or_else(|| "auto".into()),
            ),
            ("lr_decay".into(), self.lr_decay.to_string()),
            ("adam_beta1".into(), f(self.adam_betas.0)),
            ("adam_beta2".into(), f(self.adam_betas.1)),
            ("adam_eps".into(), f(self.adam_eps)),
            ("buffer_capacity".into(), self.buffer_capacity.to_string()),
            ("warmup_steps".into(), self.warmup_steps.to_string()),
            ("gamma".into(), self.gamma.map(f).unwrap_or_else(|| "auto".into())),
            ("action_repeat".into(), self.action_repeat.to_string()),
            ("reward_norm".into(), self.reward_norm.to_string()),
            ("target_net".into(), self.target_net.to_string()),
            ("probe_batch".into(), self.probe_batch.to_string()),
            ("eval_every".into(), self.eval_every.to_string()),
            ("eval_episodes".into(), self.eval_episodes.to_string()),
            ("final_eval_episodes".into(), self.final_eval_episodes.to_string()),
            ("diag_every".into(), self.diag_every.to_string()),
        ]
    }

    /// Set one field by its `to_kv` key. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| XqcError::Config(format!("bad value `{v}` for `{key}`")))
        }
        fn opt(key: &str, v: &str) -> Result<Option<f64>> {
            if v.trim() == "auto" {
                Ok(None)
            } else {
                p(key, v).map(Some)
            }
        }
        match key {
            "critic_lr" => self.critic_lr = p(key, value)?,
            "actor_lr" => self.actor_lr = p(key, value)?,
            "temp_lr" => self.temp_lr = p(key, value)?,
            "batch" => self.batch = p(key, value)?,
            "utd" => self.utd = p(key, value)?,
            "policy_delay" => self.policy_delay = p(key, value)?,
            "target_momentum" => self.target_momentum = p(key, value)?,
            "init_temperature" => self.init_temperature = p(key, value)?,
            "target_entropy" => self.target_entropy = opt(key, value)?,
            "lr_decay" => self.lr_decay = p(key, value)?,
            "adam_beta1" => self.adam_betas.0 = p(key, value)?,
            "adam_beta2" => self.adam_betas.1 = p(key, value)?,
            "adam_eps" => self.adam_eps = p(key, value)?,
            "buffer_capacity" => self.buffer_capacity = p(key, value)?,
            "warmup_steps" => self.warmup_steps = p(key, value)?,
            "gamma" => self.gamma = opt(key, value)?,
            "action_repeat" => self.action_repeat = p(key, value)?,
            "reward_norm" => self.reward_norm = p(key, value)?,
            "target_net" => self.target_net = p(key, value)?,
            "probe_batch" => self.probe_batch = p(key, value)?,
            "eval_every" => self.eval_every = p(key, value)?,
            "eval_episodes" => self.eval_episodes = p(key, value)?,
            "final_eval_episodes" => self.final_eval_episodes = p(key, value)?,
            "diag_every" => self.diag_every = p(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
