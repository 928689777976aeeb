use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scene::{SamplerParams, SceneParams};

use super::EnvError;

/// Visual modality of an observation frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsMode {
    Octree,
    Image,
}

/// Reward stages in order of difficulty. Stage i pays 8^(i-1) the first
/// time its predicate holds within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Reach,
    Touch,
    Grasp,
    Lift,
}

impl Stage {
    pub fn reward(self) -> f64 {
        match self {
            Stage::Reach => 1.0,
            Stage::Touch => 8.0,
            Stage::Grasp => 64.0,
            Stage::Lift => 512.0,
        }
    }
}

/// Environment geometry, reward thresholds and curriculum parameters.
///
/// All thresholds are explicit so variants (different success stage, camera
/// resolution, observation volume) stay expressible without code changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub obs: ObsMode,
    pub camera_width: usize,
    pub camera_height: usize,
    pub max_steps: u32,
    /// Subtracted from the reward on every step, including the last.
    pub step_penalty: f64,
    /// Meters of travel for a full-scale translation component.
    pub translation_scale: f64,
    /// Radians of rotation for a full-scale yaw component.
    pub yaw_scale: f64,
    /// Reach stage: gripper-to-nearest-centroid distance threshold.
    pub reach_radius: f64,
    /// Half extents of the grasp region box, gripper-yaw aligned.
    pub region_half: Vec3,
    /// The grasp region center sits this far below the gripper frame.
    pub region_drop: f64,
    /// Maximum object extent along the closing axis that still grasps.
    pub aperture: f64,
    /// Minimum gripper clearance above the terrain surface.
    pub standoff: f64,
    pub workspace_center: Vec3,
    pub workspace_half: Vec3,
    /// Center of the cubic observation volume.
    pub volume_center: Vec3,
    /// Edge length of the observation volume.
    pub volume_extent: f64,
    pub octree_depth: u8,
    /// Neighborhood size for normal estimation.
    pub normals_k: usize,
    /// Gripper spawn height range at reset.
    pub spawn_z: (f64, f64),
    /// Episodes averaged for the curriculum success rate; shorter histories
    /// are padded with failures.
    pub window_len: usize,
    /// Lift height at success rate zero.
    pub lift_min: f64,
    /// Lift height at and beyond `lift_full_rate`.
    pub lift_max: f64,
    /// Success rate at which the lift height saturates.
    pub lift_full_rate: f64,
    /// Reaching this stage ends the episode as a success.
    pub terminal_stage: Stage,
    pub scene: SceneParams,
    pub sampler: SamplerParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            obs: ObsMode::Octree,
            camera_width: 128,
            camera_height: 128,
            max_steps: 100,
            step_penalty: 0.1,
            translation_scale: 0.10,
            yaw_scale: std::f64::consts::FRAC_PI_4,
            reach_radius: 0.10,
            region_half: Vec3::new(0.04, 0.04, 0.03),
            region_drop: 0.03,
            aperture: 0.09,
            standoff: 0.01,
            workspace_center: Vec3::new(0.0, 0.0, 0.2),
            workspace_half: Vec3::new(0.175, 0.175, 0.30),
            volume_center: Vec3::new(0.0, 0.0, 0.1),
            volume_extent: 0.40,
            octree_depth: 4,
            normals_k: 8,
            spawn_z: (0.20, 0.45),
            window_len: 100,
            lift_min: 0.075,
            lift_max: 0.25,
            lift_full_rate: 0.33,
            terminal_stage: Stage::Lift,
            scene: SceneParams::default(),
            sampler: SamplerParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.camera_width == 0 || self.camera_height == 0 {
            return Err(EnvError::InvalidConfig("camera resolution must be nonzero"));
        }
        if self.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be >= 1"));
        }
        if !(self.translation_scale > 0.0) || !(self.yaw_scale > 0.0) {
            return Err(EnvError::InvalidConfig("action scales must be positive"));
        }
        if !(self.reach_radius > 0.0) || !(self.aperture > 0.0) {
            return Err(EnvError::InvalidConfig("reward thresholds must be positive"));
        }
        if !(self.region_half.x > 0.0 && self.region_half.y > 0.0 && self.region_half.z > 0.0) {
            return Err(EnvError::InvalidConfig("grasp region must have volume"));
        }
        if !(self.standoff >= 0.0) {
            return Err(EnvError::InvalidConfig("standoff must be non-negative"));
        }
        if !(self.workspace_half.x > 0.0 && self.workspace_half.y > 0.0 && self.workspace_half.z > 0.0)
        {
            return Err(EnvError::InvalidConfig("workspace must have volume"));
        }
        if !(self.volume_extent > 0.0) {
            return Err(EnvError::InvalidConfig("observation volume must have extent"));
        }
        if self.octree_depth == 0 {
            return Err(EnvError::InvalidConfig("octree depth must be >= 1"));
        }
        if self.normals_k < 3 {
            return Err(EnvError::InvalidConfig("normal estimation needs k >= 3"));
        }
        let (zlo, zhi) = self.spawn_z;
        let ws_lo = self.workspace_center.z - self.workspace_half.z;
        let ws_hi = self.workspace_center.z + self.workspace_half.z;
        if !(zlo <= zhi && zlo >= ws_lo && zhi <= ws_hi) {
            return Err(EnvError::InvalidConfig("spawn range must lie in the workspace"));
        }
        if self.window_len == 0 {
            return Err(EnvError::InvalidConfig("curriculum window must be >= 1"));
        }
        if !(self.lift_min > 0.0 && self.lift_min <= self.lift_max) {
            return Err(EnvError::InvalidConfig("lift heights must satisfy 0 < min <= max"));
        }
        if !(self.lift_full_rate > 0.0 && self.lift_full_rate <= 1.0) {
            return Err(EnvError::InvalidConfig("lift_full_rate must be in (0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        EnvConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = EnvConfig::default();
        c.max_steps = 0;
        assert!(c.validate().is_err());

        let mut c = EnvConfig::default();
        c.normals_k = 2;
        assert!(c.validate().is_err());

        let mut c = EnvConfig::default();
        c.spawn_z = (0.2, 0.6);
        assert!(c.validate().is_err());

        let mut c = EnvConfig::default();
        c.lift_min = 0.3;
        assert!(c.validate().is_err());

        let mut c = EnvConfig::default();
        c.lift_full_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_rewards_follow_the_exponential_schedule() {
        assert_eq!(Stage::Reach.reward(), 1.0);
        assert_eq!(Stage::Touch.reward(), 8.0);
        assert_eq!(Stage::Grasp.reward(), 64.0);
        assert_eq!(Stage::Lift.reward(), 512.0);
    }
}
