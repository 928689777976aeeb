//! Episodic kinematic grasping environment.
//!
//! A free-floating gripper frame moves through a fixed workspace above
//! procedurally generated terrain. Grasping is a geometric proxy: closing
//! the gripper attaches the nearest rock whose centroid sits in the grasp
//! region and whose width fits the aperture; the rock then follows the
//! gripper rigidly until released. Reward combines four once-per-episode
//! stage payments (reach, touch, grasp, lift) with a constant step penalty,
//! and the lift requirement follows a success-rate curriculum.

mod config;
mod curriculum;
mod grasp;
mod obs;
mod region;

pub use config::{EnvConfig, ObsMode, Stage};
pub use curriculum::{curriculum_height, SuccessWindow};
pub use grasp::{
    encode_view, proprio, Action, GraspEnv, GripperState, Info, StageFlags, StepRecord, StepResult,
};
pub use obs::{Frame, ObsData, Observation, PROPRIO_DIM};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    /// The episode already terminated; call reset.
    #[error("step called after the episode finished")]
    StepAfterDone,
    /// No episode has been started yet.
    #[error("reset must be called before step")]
    NotReset,
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("octree: {0}")]
    Octree(#[from] crate::octree::OctreeError),
}
