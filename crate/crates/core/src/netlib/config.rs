use std::fmt;
use std::str::FromStr;

use crate::error::{Result, XqcError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    Batch,
    Layer,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriticLoss {
    CrossEntropy,
    Mse,
}

/// Whether weight projection normalizes whole matrices or individual rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProjectionGranularity {
    Matrix,
    Row,
}

/// One cell of the {BN, LN, Dense} × {WN, no WN} × {CE, MSE} matrix plus
/// the network sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureConfig {
    pub norm: NormKind,
    pub weight_projection: bool,
    pub critic_loss: CriticLoss,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub actor_hidden_dim: usize,
    pub actor_blocks: usize,
    pub bn_momentum: f64,
    pub projection: ProjectionGranularity,
    /// Input batch-norm on the actor as well (BN variant only).
    pub actor_input_norm: bool,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            norm: NormKind::Batch,
            weight_projection: true,
            critic_loss: CriticLoss::CrossEntropy,
            hidden_dim: 512,
            num_blocks: 4,
            atoms: 101,
            v_min: -5.0,
            v_max: 5.0,
            actor_hidden_dim: 256,
            actor_blocks: 4,
            bn_momentum: 0.01,
            projection: ProjectionGranularity::Matrix,
            actor_input_norm: true,
        }
    }
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_blocks == 0 {
            return Err(XqcError::Config("hidden_dim and num_blocks must be >= 1".into()));
        }
        if self.actor_hidden_dim == 0 || self.actor_blocks == 0 {
            return Err(XqcError::Config(
                "actor_hidden_dim and actor_blocks must be >= 1".into(),
            ));
        }
        if self.critic_loss == CriticLoss::CrossEntropy {
            if self.atoms < 2 {
                return Err(XqcError::Config("categorical critic needs >= 2 atoms".into()));
            }
            if !(self.v_min < self.v_max) {
                return Err(XqcError::Config(format!(
                    "support must satisfy v_min < v_max, got [{}, {}]",
                    self.v_min, self.v_max
                )));
            }
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(XqcError::Config("bn_momentum must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Apply a cell label such as `bn,wn,ce` or `ln+nown+mse`; unspecified
    /// axes keep their current value.
    pub fn with_cell(mut self, label: &str) -> Result<Self> {
        for tok in label.split([',', '+']).map(str::trim).filter(|t| !t.is_empty()) {
            match tok.to_ascii_lowercase().as_str() {
                "bn" => self.norm = NormKind::Batch,
                "ln" => self.norm = NormKind::Layer,
                "dense" | "none" => self.norm = NormKind::None,
                "wn" => self.weight_projection = true,
                "nown" | "no-wn" | "!wn" => self.weight_projection = false,
                "ce" => self.critic_loss = CriticLoss::CrossEntropy,
                "mse" => self.critic_loss = CriticLoss::Mse,
                other => return Err(XqcError::Config(format!("unknown architecture token `{other}`"))),
            }
        }
        Ok(self)
    }

    /// Canonical cell label, e.g. `bn+wn+ce`.
    pub fn cell_label(&self) -> String {
        let n = match self.norm {
            NormKind::Batch => "bn",
            NormKind::Layer => "ln",
            NormKind::None => "dense",
        };
        let w = if self.weight_projection { "wn" } else { "nown" };
        let l = match self.critic_loss {
            CriticLoss::CrossEntropy => "ce",
            CriticLoss::Mse => "mse",
        };
        format!("{n}+{w}+{l}")
    }

    /// All twelve cells with this config's sizes.
    pub fn matrix(&self) -> Vec<ArchitectureConfig> {
        let mut out = Vec::with_capacity(12);
        for norm in [NormKind::Batch, NormKind::Layer, NormKind::None] {
            for wn in [true, false] {
                for loss in [CriticLoss::CrossEntropy, CriticLoss::Mse] {
                    out.push(ArchitectureConfig {
                        norm,
                        weight_projection: wn,
                        critic_loss: loss,
                        ..self.clone()
                    });
                }
            }
        }
        out
    }

    /// Stable textual form used for hashing and run configs.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("arch".into(), self.cell_label()),
            ("hidden_dim".into(), self.hidden_dim.to_string()),
            ("num_blocks".into(), self.num_blocks.to_string()),
            ("atoms".into(), self.atoms.to_string()),
            ("v_min".into(), format!("{:?}", self.v_min)),
            ("v_max".into(), format!("{:?}", self.v_max)),
            ("actor_hidden_dim".into(), self.actor_hidden_dim.to_string()),
            ("actor_blocks".into(), self.actor_blocks.to_string()),
            ("bn_momentum".into(), format!("{:?}", self.bn_momentum)),
            (
                "projection".into(),
                match self.projection {
                    ProjectionGranularity::Matrix => "matrix".into(),
                    ProjectionGranularity::Row => "row".into(),
                },
            ),
            ("actor_input_norm".into(), self.actor_input_norm.to_string()),
        ]
    }

    /// Set one `key=value` field (the keys of [`ArchitectureConfig::to_kv`]).
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| XqcError::Config(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "arch" => *self = self.clone().with_cell(value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "num_blocks" => self.num_blocks = num(key, value)?,
            "atoms" => self.atoms = num(key, value)?,
            "v_min" => self.v_min = num(key, value)?,
            "v_max" => self.v_max = num(key, value)?,
            "actor_hidden_dim" => self.actor_hidden_dim = num(key, value)?,
            "actor_blocks" => self.actor_blocks = num(key, value)?,
            "bn_momentum" => self.bn_momentum = num(key, value)?,
            "projection" => {
                self.projection = match value.trim() {
                    "matrix" => ProjectionGranularity::Matrix,
                    "row" => ProjectionGranularity::Row,
                    v => return Err(XqcError::Config(format!("bad projection `{v}`"))),
                }
            }
            "actor_input_norm" => self.actor_input_norm = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl fmt::Display for ArchitectureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}x{}, actor {}x{})",
            self.cell_label(),
            self.hidden_dim,
            self.num_blocks,
            self.actor_hidden_dim,
            self.actor_blocks
        )
    }
}
