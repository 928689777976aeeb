//! Procedural lunar scenes: noise-displaced terrain with craters, displaced
//! icosphere rocks, episode-level domain randomization, and ray-cast
//! depth/intensity rendering under a single sun light.

mod episode;
mod noise;
mod raycast;
mod render;
mod rock;
mod terrain;

pub use episode::{
    EpisodeConfig, EpisodeSampler, ObjectConfig, Randomization, SamplerParams,
};
pub use raycast::{occluded, raycast, HitObject, RayHit};
pub use render::{look_at, render, RenderOutput};
pub use rock::{export_obj, gen_rock, gen_rock_with, RockMesh, RockParams, TriMesh};
pub use terrain::{
    flat_params, gen_terrain, gen_terrain_with, Crater, Terrain, TerrainParams,
};

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};

/// Fixed layout shared by every episode; randomized fields live in
/// [`EpisodeConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub terrain_size: f64,
    pub terrain_resolution: usize,
    pub terrain: TerrainParams,
    /// Base rock radius range in meters.
    pub rock_radius: (f64, f64),
    pub rock: RockParams,
    /// Camera mount point before jitter.
    pub camera_mount: Vec3,
    pub camera_target: Vec3,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            terrain_size: 0.8,
            terrain_resolution: 64,
            terrain: TerrainParams::default(),
            rock_radius: (0.015, 0.03),
            rock: RockParams::default(),
            camera_mount: Vec3::new(-0.55, 0.0, 0.50),
            camera_target: Vec3::new(0.0, 0.0, 0.1),
        }
    }
}

/// A rock instanced into the scene. World-space collision geometry is cached
/// so casting and contact checks never re-transform vertices; pose changes
/// must go through [`Scene::set_rock_pose`] or [`Scene::settle_rock`] to keep
/// the cache coherent.
#[derive(Debug, Clone)]
pub struct PlacedRock {
    pub mesh: RockMesh,
    pub density: f64,
    pub friction: f64,
    pub albedo: f64,
    pose: Pose,
    world_verts: Vec<Vec3>,
    centroid: Vec3,
    bound_radius: f64,
}

impl PlacedRock {
    fn new(mesh: RockMesh, pose: Pose, density: f64, friction: f64, albedo: f64) -> Self {
        let bound_radius = mesh
            .collision
            .vertices
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        let mut rock = PlacedRock {
            mesh,
            density,
            friction,
            albedo,
            pose,
            world_verts: Vec::new(),
            centroid: Vec3::ZERO,
            bound_radius,
        };
        rock.recache();
        rock
    }

    fn recache(&mut self) {
        self.world_verts = self
            .mesh
            .collision
            .vertices
            .iter()
            .map(|&v| self.pose.apply(v))
            .collect();
        let sum = self
            .world_verts
            .iter()
            .fold(Vec3::ZERO, |acc, &v| acc + v);
        self.centroid = sum * (1.0 / self.world_verts.len() as f64);
    }

    fn set_pose(&mut self, pose: Pose) {
        self.pose = pose;
        self.recache();
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    /// Collision vertices in world coordinates.
    pub fn world_verts(&self) -> &[Vec3] {
        &self.world_verts
    }

    /// Mean of the world-space collision vertices.
    pub fn centroid(&self) -> Vec3 {
        self.centroid
    }

    /// Bounding sphere around the pose origin covering the collision mesh.
    pub fn bound_center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn bound_radius(&self) -> f64 {
        self.bound_radius
    }

    /// Axis-aligned bounds of the world-space collision vertices.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for v in &self.world_verts {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        (lo, hi)
    }

    /// Width of the collision mesh projected onto a unit `axis`.
    pub fn extent_along(&self, axis: Vec3) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &self.world_verts {
            let d = v.dot(axis);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi - lo
    }
}

/// A fully instanced episode: terrain, settled rocks, sun and camera.
#[derive(Debug, Clone)]
pub struct Scene {
    pub terrain: Terrain,
    pub rocks: Vec<PlacedRock>,
    /// Unit vector toward the sun.
    pub sun_dir: Vec3,
    /// Camera-to-world pose, +z forward and +y down in camera frame.
    pub camera: Pose,
}

impl Scene {
    /// Move a rock rigidly (grasped transport); refreshes cached geometry.
    pub fn set_rock_pose(&mut self, i: usize, pose: Pose) {
        self.rocks[i].set_pose(pose);
    }

    /// Drop a rock vertically until its lowest vertex rests on the terrain,
    /// keeping x, y and orientation (release after a grasp).
    pub fn settle_rock(&mut self, i: usize) {
        let pose = self.rocks[i].pose;
        let z = settle_height(&self.terrain, &self.rocks[i].mesh, &pose);
        self.rocks[i].set_pose(Pose::new(
            pose.rotation,
            Vec3::new(pose.translation.x, pose.translation.y, z),
        ));
    }

    /// Index and distance of the rock whose centroid is closest to `p`.
    pub fn nearest_rock(&self, p: Vec3) -> Option<(usize, f64)> {
        self.rocks
            .iter()
            .enumerate()
            .map(|(i, r)| (i, (r.centroid() - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Pose z that rests the lowest collision vertex on the terrain surface.
fn settle_height(terrain: &Terrain, mesh: &RockMesh, pose: &Pose) -> f64 {
    mesh.collision
        .vertices
        .iter()
        .map(|&v| {
            let r = pose.rotation.mul_vec(v);
            terrain.height_at(pose.translation.x + r.x, pose.translation.y + r.y) - r.z
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Instantiate an episode: generate terrain and rock meshes from their
/// seeds, settle each rock onto the surface at its configured x/y and
/// orientation, and place the camera on its jittered mount.
pub fn assemble(cfg: &EpisodeConfig, params: &SceneParams) -> Scene {
    let terrain = gen_terrain_with(
        cfg.terrain_seed,
        params.terrain_size,
        params.terrain_resolution,
        &params.terrain,
    );
    let rocks = cfg
        .objects
        .iter()
        .map(|o| {
            let mesh = gen_rock_with(o.mesh_seed, params.rock_radius, &params.rock);
            let z = settle_height(&terrain, &mesh, &o.pose);
            let pose = Pose::new(
                o.pose.rotation,
                Vec3::new(o.pose.translation.x, o.pose.translation.y, z),
            );
            PlacedRock::new(mesh, pose, o.density, o.friction, o.albedo)
        })
        .collect();
    let camera = look_at(params.camera_mount + cfg.camera_jitter, params.camera_target);
    Scene {
        terrain,
        rocks,
        sun_dir: cfg.sun_dir(),
        camera,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn demo_config(seed: u64) -> EpisodeConfig {
        let mut sampler = EpisodeSampler::new(Randomization::Full, seed, SamplerParams::default());
        sampler.sample()
    }

    #[test]
    fn assemble_is_deterministic() {
        let cfg = demo_config(1);
        let params = SceneParams::default();
        let a = assemble(&cfg, &params);
        let b = assemble(&cfg, &params);
        assert_eq!(a.terrain, b.terrain);
        assert_eq!(a.sun_dir, b.sun_dir);
        assert_eq!(a.camera, b.camera);
        assert_eq!(a.rocks.len(), b.rocks.len());
        for (ra, rb) in a.rocks.iter().zip(&b.rocks) {
            assert_eq!(ra.pose(), rb.pose());
            assert_eq!(ra.world_verts(), rb.world_verts());
        }
    }

    #[test]
    fn rocks_rest_on_terrain() {
        for seed in 0..20 {
            let scene = assemble(&demo_config(seed), &SceneParams::default());
            for rock in &scene.rocks {
                let mut min_gap = f64::INFINITY;
                for v in rock.world_verts() {
                    let gap = v.z - scene.terrain.height_at(v.x, v.y);
                    assert!(gap >= -1e-9, "vertex below terrain by {gap}");
                    min_gap = min_gap.min(gap);
                }
                assert!(min_gap.abs() < 1e-9, "lowest vertex floats by {min_gap}");
            }
        }
    }

    #[test]
    fn settle_rock_restores_contact_after_lift() {
        let mut scene = assemble(&demo_config(3), &SceneParams::default());
        let pose = scene.rocks[0].pose();
        let lifted = Pose::new(pose.rotation, pose.translation + Vec3::new(0.02, -0.01, 0.3));
        scene.set_rock_pose(0, lifted);
        assert!(scene.rocks[0].world_verts().iter().all(|v| {
            v.z > scene.terrain.height_at(v.x, v.y) + 0.1
        }));
        scene.settle_rock(0);
        let min_gap = scene.rocks[0]
            .world_verts()
            .iter()
            .map(|v| v.z - scene.terrain.height_at(v.x, v.y))
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap.abs() < 1e-9);
        // x, y and orientation survive the drop.
        let settled = scene.rocks[0].pose();
        assert_eq!(settled.rotation, lifted.rotation);
        assert_eq!(settled.translation.x, lifted.translation.x);
        assert_eq!(settled.translation.y, lifted.translation.y);
    }

    #[test]
    fn cached_geometry_tracks_pose() {
        let mut scene = assemble(&demo_config(9), &SceneParams::default());
        let shift = Vec3::new(0.05, 0.02, 0.1);
        let before: Vec<Vec3> = scene.rocks[0].world_verts().to_vec();
        let pose = scene.rocks[0].pose();
        scene.set_rock_pose(0, Pose::new(pose.rotation, pose.translation + shift));
        for (a, b) in before.iter().zip(scene.rocks[0].world_verts()) {
            assert!((*a + shift - *b).norm() < 1e-12);
        }
        // Bounding sphere still covers every vertex.
        let rock = &scene.rocks[0];
        for v in rock.world_verts() {
            assert!((*v - rock.bound_center()).norm() <= rock.bound_radius() + 1e-12);
        }
    }

    #[test]
    fn nearest_rock_picks_closest_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scene = assemble(&demo_config(17), &SceneParams::default());
        for _ in 0..32 {
            use rand::Rng;
            let p = Vec3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(0.0..0.4),
            );
            let (idx, dist) = scene.nearest_rock(p).unwrap();
            for (i, r) in scene.rocks.iter().enumerate() {
                let d = (r.centroid() - p).norm();
                assert!(d >= dist - 1e-12, "rock {i} closer than picked {idx}");
            }
        }
    }
}
