//! Spatial types and conversions: poses, the continuous 6D rotation
//! representation, the pinhole camera model, depth unprojection, frame
//! transforms, cropping and normal estimation.
//!
//! Everything here is a pure function on immutable inputs.

mod camera;
mod cloud;
pub(crate) mod normals;
mod types;

pub use camera::{unproject, CameraIntrinsics, Image};
pub use cloud::{
    crop_cloud, load_point_cloud, save_point_cloud, transform_cloud, Point, PointCloud,
};
pub use normals::estimate_normals;
pub use types::{random_rotation, rot_to_6d, rot6d_to_mat, Mat3, Pose, Rotation6D, Vec3};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    /// Input vectors are too close to zero or parallel to define a rotation.
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    /// Paired images do not share dimensions.
    #[error("image dimension mismatch: {width0}x{height0} vs {width1}x{height1}")]
    DimensionMismatch {
        width0: usize,
        height0: usize,
        width1: usize,
        height1: usize,
    },
    /// Fewer points than neighbors requested for normal estimation.
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    /// A buffer or serialized record failed validation.
    #[error("malformed input: {0}")]
    MalformedInput(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
