//! Vision-based grasp learning on procedurally generated lunar scenes.
//!
//! The crate is organized as a pipeline: [`scene`] generates terrain and
//! rocks and renders depth/intensity observations, [`geometry`] turns them
//! into point clouds with surface normals, [`octree`] encodes the cropped
//! cloud as a multi-channel octree, [`env`] wraps everything in an episodic
//! grasping MDP, and [`tqc`] trains an actor-critic agent on it using the
//! networks from [`nets`].
//!
//! [`reference`] holds brute-force reference implementations (dense binning,
//! dense convolution, exhaustive intersection and neighbor search, finite
//! differences). They are deliberately slow and independent of the main code
//! paths; the test suites compare against them.

pub mod env;
pub mod geometry;
pub mod nets;
pub mod octree;
pub mod reference;
pub mod scene;
pub mod tqc;
