//! Network construction for every cell of the architecture matrix: critic
//! and actor bodies built from Linear → {BN | LN | none} → ReLU blocks,
//! weight projection onto the unit sphere, and the checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod networks;
pub mod project;

pub use checkpoint::{config_hash, Checkpoint, Precision};
pub use config::{ArchitectureConfig, CriticLoss, NormKind, ProjectionGranularity};
pub use networks::{
    actor_forward, build, critic_forward, ActorNetwork, ActorOutput, CriticNetwork, Networks, LOG_STD_MAX, LOG_STD_MIN,
};
pub use project::{project_in_place, project_weights, projected_norms};
