//! The training loop: soft actor-critic with automatic temperature, two
//! critics with Polyak targets, a joint batch-norm pass over current and
//! next state-action pairs, reward scaling by the return's running standard
//! deviation, and weight projection after every optimizer step.

mod adam;
mod agent;
mod config;
mod replay;
mod reward;
mod train;

pub use adam::Adam;
pub use agent::{ActorDiag, Agent, CriticDiag};
pub use config::{discount_heuristic, scheduled_lr, TrainerConfig};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use reward::RewardNormalizer;
pub use train::{derive_seed, fmt_num, run_config_text, train, DiagRecord, ProbeSnapshot, RunArtifacts, Trainer};
