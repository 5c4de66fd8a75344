//! Update functions and training runs.

pub mod adam;
pub mod bc;
pub mod gradcheck;
pub mod replay;
pub mod td3;
pub mod update;

pub use adam::{AdamConfig, AdamState};
pub use bc::{bc_clone, BcConfig};
pub use gradcheck::{gradient_check, CheckedLoss};
pub use replay::{ReplayBuffer, Transition};
pub use td3::{td3_train, Td3Config, Td3State, TrainOutcome};
pub use update::{sample_update, UpdateFamily, UpdateSource};

use crate::policy::{MlpShape, ParamVector};

/// A saved policy, optionally with the learner state that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub actor: ParamVector,
    pub shape: MlpShape,
    pub env_name: String,
    pub seed: u64,
    pub config_hash: String,
    pub state: Option<Box<Td3State>>,
}

impl Checkpoint {
    /// Stable identifier, `s{seed}-t{step}`.
    pub fn id(&self) -> String {
        format!("s{}-t{}", self.seed, self.step)
    }

    /// A bare policy checkpoint (no learner state).
    pub fn from_policy(shape: MlpShape, actor: ParamVector, env_name: &str, seed: u64, step: u64) -> Self {
        Self { step, actor, shape, env_name: env_name.into(), seed, config_hash: String::new(), state: None }
    }
}
