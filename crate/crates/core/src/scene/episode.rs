use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{random_rotation, Pose, Vec3};

/// Per-object domain randomization draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub mesh_seed: u64,
    /// Provisional pose; z is recomputed when the object settles onto the
    /// terrain during scene assembly.
    pub pose: Pose,
    /// kg/m^3; logging parity only, the contact proxy is kinematic.
    pub density: f64,
    pub friction: f64,
    /// Uniform Lambertian albedo standing in for material variety.
    pub albedo: f64,
}

/// Every randomized quantity of one episode; serializable for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Stream seed for per-episode noise (sensor noise and the like).
    pub seed: u64,
    pub objects: Vec<ObjectConfig>,
    pub terrain_seed: u64,
    /// Radians; azimuth in [0, 2pi), elevation > 0.
    pub sun_azimuth: f64,
    pub sun_elevation: f64,
    /// Additive offset of the camera mount, +-5 cm per axis.
    pub camera_jitter: Vec3,
    pub noise_sigma: f64,
}

impl EpisodeConfig {
    /// Direction from the scene toward the sun, unit length.
    pub fn sun_dir(&self) -> Vec3 {
        let (saz, caz) = self.sun_azimuth.sin_cos();
        let (sel, cel) = self.sun_elevation.sin_cos();
        Vec3::new(cel * caz, cel * saz, sel)
    }

    /// Check the domain invariants; `footprint_half` bounds object x/y.
    pub fn validate(&self, footprint_half: f64) -> bool {
        (1..=4).contains(&self.objects.len())
            && self.sun_elevation > 0.0
            && self.noise_sigma >= 0.0
            && self.camera_jitter.x.abs() <= 0.05 + 1e-12
            && self.camera_jitter.y.abs() <= 0.05 + 1e-12
            && self.camera_jitter.z.abs() <= 0.05 + 1e-12
            && self.objects.iter().all(|o| {
                o.pose.translation.x.abs() <= footprint_half
                    && o.pose.translation.y.abs() <= footprint_half
            })
    }
}

/// Scope of the per-episode randomization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Randomization {
    /// Every field drawn fresh each episode.
    Full,
    /// Terrain, sun, camera jitter and the object count are drawn once at
    /// construction; rock seeds come from a fixed pool of 4. Only object
    /// poses (and the caller's gripper pose) vary between episodes.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerParams {
    /// Object x/y are drawn from [-footprint_half, footprint_half].
    pub footprint_half: f64,
    pub object_count: (usize, usize),
    pub sun_elevation_deg: (f64, f64),
    pub camera_jitter_max: f64,
    pub noise_sigma: f64,
    pub density: (f64, f64),
    pub friction: (f64, f64),
    pub albedo: (f64, f64),
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            footprint_half: 0.13,
            object_count: (1, 4),
            sun_elevation_deg: (15.0, 75.0),
            camera_jitter_max: 0.05,
            noise_sigma: 0.001,
            density: (1500.0, 3500.0),
            friction: (0.5, 1.0),
            albedo: (0.3, 0.9),
        }
    }
}

#[derive(Debug, Clone)]
struct FrozenDraws {
    terrain_seed: u64,
    sun_azimuth: f64,
    sun_elevation: f64,
    camera_jitter: Vec3,
    rock_seed_pool: [u64; 4],
    object_count: usize,
}

/// Draws an [`EpisodeConfig`] per episode under the chosen randomization
/// scope. Deterministic for a given construction seed.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    params: SamplerParams,
    mode: Randomization,
    rng: ChaCha8Rng,
    frozen: Option<FrozenDraws>,
}

impl EpisodeSampler {
    pub fn new(mode: Randomization, seed: u64, params: SamplerParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frozen = (mode == Randomization::Reduced).then(|| FrozenDraws {
            terrain_seed: rng.gen(),
            sun_azimuth: rng.gen_range(0.0..std::f64::consts::TAU),
            sun_elevation: rng
                .gen_range(params.sun_elevation_deg.0..=params.sun_elevation_deg.1)
                .to_radians(),
            camera_jitter: Vec3::new(
                rng.gen_range(-params.camera_jitter_max..=params.camera_jitter_max),
                rng.gen_range(-params.camera_jitter_max..=params.camera_jitter_max),
                rng.gen_range(-params.camera_jitter_max..=params.camera_jitter_max),
            ),
            rock_seed_pool: std::array::from_fn(|_| rng.gen()),
            object_count: rng.gen_range(params.object_count.0..=params.object_count.1),
        });
        EpisodeSampler {
            params,
            mode,
            rng,
            frozen,
        }
    }

    pub fn mode(&self) -> Randomization {
        self.mode
    }

    pub fn sample(&mut self) -> EpisodeConfig {
        let p = self.params;
        let count = match &self.frozen {
            Some(f) => f.object_count,
            None => self.rng.gen_range(p.object_count.0..=p.object_count.1),
        };
        let objects = (0..count)
            .map(|_| {
                let mesh_seed = match &self.frozen {
                    Some(f) => f.rock_seed_pool[self.rng.gen_range(0..4)],
                    None => self.rng.gen(),
                };
                let translation = Vec3::new(
                    self.rng.gen_range(-p.footprint_half..=p.footprint_half),
                    self.rng.gen_range(-p.footprint_half..=p.footprint_half),
                    0.0,
                );
                ObjectConfig {
                    mesh_seed,
                    pose: Pose::new(random_rotation(&mut self.rng), translation),
                    density: self.rng.gen_range(p.density.0..=p.density.1),
                    friction: self.rng.gen_range(p.friction.0..=p.friction.1),
                    albedo: self.rng.gen_range(p.albedo.0..=p.albedo.1),
                }
            })
            .collect();
        let (terrain_seed, sun_azimuth, sun_elevation, camera_jitter) = match &self.frozen {
            Some(f) => (
                f.terrain_seed,
                f.sun_azimuth,
                f.sun_elevation,
                f.camera_jitter,
            ),
            None => (
                self.rng.gen(),
                self.rng.gen_range(0.0..std::f64::consts::TAU),
                self.rng
                    .gen_range(p.sun_elevation_deg.0..=p.sun_elevation_deg.1)
                    .to_radians(),
                Vec3::new(
                    self.rng.gen_range(-p.camera_jitter_max..=p.camera_jitter_max),
                    self.rng.gen_range(-p.camera_jitter_max..=p.camera_jitter_max),
                    self.rng.gen_range(-p.camera_jitter_max..=p.camera_jitter_max),
                ),
            ),
        };
        EpisodeConfig {
            seed: self.rng.gen(),
            objects,
            terrain_seed,
            sun_azimuth,
            sun_elevation,
            camera_jitter,
            noise_sigma: p.noise_sigma,
        }
    }
}
