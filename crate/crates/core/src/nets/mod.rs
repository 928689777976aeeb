//! Neural network layers with hand-derived gradients.
//!
//! Every layer follows the same explicit-context pattern: `forward` is
//! `&self` and returns the output together with a context capturing what the
//! backward pass needs; `backward` takes that context and the output
//! gradient, accumulates into the layer's parameter gradient buffers, and
//! returns the input gradient. Callers own gradient zeroing.
//!
//! The extractors additionally offer a stacked facade (`forward_stacked` /
//! `backward_stacked`) that records a tape over a whole mini-batch of
//! observations. Its backward zeroes the extractor's parameter gradients and
//! then repopulates them (zero-and-replace), so repeating backward without a
//! new forward is idempotent; backward before any forward is
//! [`NetError::GraphNotBuilt`].

mod checkpoint;
mod extractor;
mod heads;
mod layers;
mod policy;
mod sparse;
mod tensor;

pub use checkpoint::{load_snapshot, save_snapshot, Snapshot, SnapshotEntry, SNAPSHOT_VERSION};
pub use extractor::{ImageExtractor, OctreeExtractor};
pub use heads::{ActorHead, ActorHeadCtx, CriticHead, CriticHeadCtx, ATOMS};
pub use layers::{Conv2d, Conv2dCtx, Dense, DenseCtx, MaxPool2d, MaxPool2dCtx, Relu, ReluCtx};
pub use policy::{
    deterministic_actions, sample_policy, squashed_log_density, SquashedSample, ACTION_DIM,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use sparse::{voxelize_backward, voxelize_level, LevelFeatures, OctreePool, SparseConv3d};
pub use tensor::{linear_lr, polyak, Adam, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("backward requested before any forward pass was recorded")]
    GraphNotBuilt,
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
