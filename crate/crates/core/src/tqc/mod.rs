//! Truncated quantile critics agent and training loop.
//!
//! The agent pairs a squashed-Gaussian actor with an ensemble of
//! distributional critics whose atoms estimate quantiles of the return. The
//! critic target pools every target-critic atom at the next state, sorts
//! them, and drops the largest few before the soft Bellman backup, which
//! curbs overestimation; the actor maximizes the mean over all pooled
//! online atoms plus an entropy bonus whose temperature is learned against
//! a fixed entropy target.

mod agent;
mod config;
mod losses;
mod replay;
mod train;

pub use agent::{Extractor, TqcAgent, UpdateStats};
pub use config::{GradientCadence, TqcConfig, Truncation};
pub use losses::{actor_objective, alpha_objective, quantile_huber, target_distribution};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate, train, EpisodeTrace, EvalPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TqcError {
    #[error("invalid TQC config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid transition: {0}")]
    InvalidTransition(&'static str),
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}
