use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{
    crop_cloud, estimate_normals, rot_to_6d, transform_cloud, unproject, CameraIntrinsics, Image,
    Mat3, Pose, Vec3,
};
use crate::octree::{build_octree, Octree};
use crate::scene::{assemble, render, EpisodeConfig, EpisodeSampler, Randomization, Scene};

use super::config::{EnvConfig, ObsMode, Stage};
use super::curriculum::{curriculum_height, SuccessWindow};
use super::obs::{Frame, ObsData, Observation, PROPRIO_DIM};
use super::region::GraspRegion;
use super::EnvError;

/// One agent command: relative translation, relative yaw, and the gripper
/// command g, all in [-1, 1]. Components outside that range are clamped
/// before mapping to metric units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub dyaw: f64,
    /// g >= 0 opens the gripper, g < 0 closes it.
    pub grip: f64,
}

impl Action {
    pub fn new(dx: f64, dy: f64, dz: f64, dyaw: f64, grip: f64) -> Action {
        Action {
            dx,
            dy,
            dz,
            dyaw,
            grip,
        }
    }

    pub fn from_array(a: [f64; 5]) -> Action {
        Action::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dz, self.dyaw, self.grip]
    }

    fn clamped(&self) -> Action {
        Action {
            dx: self.dx.clamp(-1.0, 1.0),
            dy: self.dy.clamp(-1.0, 1.0),
            dz: self.dz.clamp(-1.0, 1.0),
            dyaw: self.dyaw.clamp(-1.0, 1.0),
            grip: self.grip.clamp(-1.0, 1.0),
        }
    }
}

/// Free-floating gripper frame: position plus yaw about the vertical axis,
/// the open/closed state, and the attached rock if any.
#[derive(Debug, Clone, Copy)]
pub struct GripperState {
    pub position: Vec3,
    pub yaw: f64,
    /// Closed maps to g_s = -1, open to +1. Attachment implies closed.
    pub closed: bool,
    pub attached: Option<usize>,
}

impl GripperState {
    pub fn pose(&self) -> Pose {
        Pose::new(Mat3::rot_z(self.yaw), self.position)
    }

    pub fn g_s(&self) -> f32 {
        if self.closed {
            -1.0
        } else {
            1.0
        }
    }

    /// World axis along which the fingers close: the gripper-frame y axis.
    pub fn closing_axis(&self) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(-s, c, 0.0)
    }
}

/// Which reward stages have completed so far this episode. The set only
/// grows within an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StageFlags {
    pub reached: bool,
    pub touched: bool,
    pub grasped: bool,
    pub lifted: bool,
}

impl StageFlags {
    pub fn contains(&self, stage: Stage) -> bool {
        match stage {
            Stage::Reach => self.reached,
            Stage::Touch => self.touched,
            Stage::Grasp => self.grasped,
            Stage::Lift => self.lifted,
        }
    }
}

/// Per-step diagnostics returned alongside the observation.
#[derive(Debug, Clone, Copy)]
pub struct Info {
    pub flags: StageFlags,
    /// Stage payments collected this step, before the step penalty.
    pub stage_reward: f64,
    pub lift_height: f64,
    pub gripper_position: Vec3,
    pub gripper_yaw: f64,
    /// 1-based index of the step just taken.
    pub step: u32,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: Info,
}

/// One line of the episode trace log.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub action: [f64; 5],
    pub reward: f64,
    pub flags: StageFlags,
    pub position: [f64; 3],
    pub yaw: f64,
    pub done: bool,
}

impl StepRecord {
    pub fn new(action: &Action, r: &StepResult) -> StepRecord {
        StepRecord {
            step: r.info.step,
            action: action.as_array(),
            reward: r.reward,
            flags: r.info.flags,
            position: [
                r.info.gripper_position.x,
                r.info.gripper_position.y,
                r.info.gripper_position.z,
            ],
            yaw: r.info.gripper_yaw,
            done: r.done,
        }
    }
}

struct EpisodeState {
    config: EpisodeConfig,
    scene: Scene,
    gripper: GripperState,
    /// Attached rock pose expressed in the gripper frame.
    hold: Option<Pose>,
    flags: StageFlags,
    steps: u32,
    done: bool,
    rng: ChaCha8Rng,
    obs: Observation,
}

/// The episodic grasping MDP. Owns the episode sampler, the live scene and
/// the curriculum state; one instance is single-threaded.
pub struct GraspEnv {
    cfg: EnvConfig,
    sampler: EpisodeSampler,
    intrinsics: CameraIntrinsics,
    window: SuccessWindow,
    lift_height: f64,
    episode: Option<EpisodeState>,
}

impl GraspEnv {
    pub fn new(cfg: EnvConfig, mode: Randomization, seed: u64) -> Result<GraspEnv, EnvError> {
        cfg.validate()?;
        let sampler = EpisodeSampler::new(mode, seed, cfg.sampler);
        let intrinsics = CameraIntrinsics::standard(cfg.camera_width, cfg.camera_height);
        Ok(GraspEnv {
            window: SuccessWindow::new(cfg.window_len),
            lift_height: cfg.lift_min,
            sampler,
            intrinsics,
            episode: None,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Current curriculum lift height.
    pub fn lift_height(&self) -> f64 {
        self.lift_height
    }

    /// Rolling success rate over the outcome window.
    pub fn success_rate(&self) -> f64 {
        self.window.rate()
    }

    pub fn gripper(&self) -> Option<&GripperState> {
        self.episode.as_ref().map(|e| &e.gripper)
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.episode.as_ref().map(|e| &e.scene)
    }

    pub fn episode_config(&self) -> Option<&EpisodeConfig> {
        self.episode.as_ref().map(|e| &e.config)
    }

    pub fn steps_taken(&self) -> u32 {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    /// Start a new episode drawn from the sampler.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let cfg = self.sampler.sample();
        self.reset_with(cfg)
    }

    /// Start a new episode from an explicit config (exact replay).
    pub fn reset_with(&mut self, config: EpisodeConfig) -> Result<Observation, EnvError> {
        if !config.validate(self.cfg.sampler.footprint_half) {
            return Err(EnvError::InvalidConfig("episode config failed validation"));
        }
        // Curriculum: recompute from the window, never easing off within a
        // run, so the requirement is non-decreasing under any outcome
        // stream.
        self.lift_height = self.lift_height.max(curriculum_height(
            self.cfg.lift_min,
            self.cfg.lift_max,
            self.cfg.lift_full_rate,
            self.window.rate(),
        ));
        let scene = assemble(&config, &self.cfg.scene);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = self.cfg.workspace_center;
        let h = self.cfg.workspace_half;
        let x = rng.gen_range(c.x - h.x..=c.x + h.x);
        let y = rng.gen_range(c.y - h.y..=c.y + h.y);
        let z = rng.gen_range(self.cfg.spawn_z.0..=self.cfg.spawn_z.1);
        let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        // Safety invariant holds from the first frame onward.
        let z = z.max(scene.terrain.height_at(x, y) + self.cfg.standoff);
        let gripper = GripperState {
            position: Vec3::new(x, y, z),
            yaw,
            closed: false,
            attached: None,
        };
        let frame = capture_frame(
            &self.cfg,
            &self.intrinsics,
            &scene,
            config.noise_sigma,
            &mut rng,
            &gripper,
        )?;
        let obs = Observation::initial(frame);
        self.episode = Some(EpisodeState {
            config,
            scene,
            gripper,
            hold: None,
            flags: StageFlags::default(),
            steps: 0,
            done: false,
            rng,
            obs: obs.clone(),
        });
        Ok(obs)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let cfg = self.cfg;
        let lift_height = self.lift_height;
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::StepAfterDone);
        }
        let a = action.clamped();
        apply_motion(&cfg, ep, &a);
        apply_gripper(&cfg, ep, a.grip);

        let frame = capture_frame(
            &cfg,
            &self.intrinsics,
            &ep.scene,
            ep.config.noise_sigma,
            &mut ep.rng,
            &ep.gripper,
        )?;
        ep.obs = ep.obs.advance(frame);

        let (flags, stage_reward) = advance_stages(&cfg, ep, lift_height);
        ep.flags = flags;
        let reward = stage_reward - cfg.step_penalty;

        ep.steps += 1;
        let success = ep.flags.contains(cfg.terminal_stage);
        let done = success || ep.steps >= cfg.max_steps;
        ep.done = done;
        if done {
            self.window.push(success);
        }
        Ok(StepResult {
            obs: ep.obs.clone(),
            reward,
            done,
            info: Info {
                flags: ep.flags,
                stage_reward,
                lift_height,
                gripper_position: ep.gripper.position,
                gripper_yaw: ep.gripper.yaw,
                step: ep.steps,
                success,
            },
        })
    }
}

/// Translate along the straight segment toward the commanded target,
/// stopping at the workspace boundary (per-axis clamp of the target; the
/// box is convex, so the whole segment stays inside) or at the terrain
/// standoff, whichever binds first. Also applies the yaw increment and
/// carries any attached rock rigidly.
fn apply_motion(cfg: &EnvConfig, ep: &mut EpisodeState, a: &Action) {
    let g = &mut ep.gripper;
    let start = g.position;
    let c = cfg.workspace_center;
    let h = cfg.workspace_half;
    let target = Vec3::new(
        (start.x + a.dx * cfg.translation_scale).clamp(c.x - h.x, c.x + h.x),
        (start.y + a.dy * cfg.translation_scale).clamp(c.y - h.y, c.y + h.y),
        (start.z + a.dz * cfg.translation_scale).clamp(c.z - h.z, c.z + h.z),
    );
    g.position = march_to(&ep.scene, start, target, cfg.standoff);
    g.yaw = wrap_angle(g.yaw + a.dyaw * cfg.yaw_scale);
    if let (Some(i), Some(hold)) = (g.attached, ep.hold.as_ref()) {
        ep.scene.set_rock_pose(i, g.pose().compose(hold));
    }
}

/// Clearance above the terrain at parameter t of the segment.
fn clearance(scene: &Scene, start: Vec3, target: Vec3, standoff: f64, t: f64) -> f64 {
    let p = start + (target - start) * t;
    p.z - scene.terrain.height_at(p.x, p.y) - standoff
}

/// First-contact march: scan the segment, then bisect the first violating
/// interval down to 1e-6 of the segment, returning the last point that
/// still clears the terrain. An unobstructed move lands exactly on target.
fn march_to(scene: &Scene, start: Vec3, target: Vec3, standoff: f64) -> Vec3 {
    const SAMPLES: u32 = 64;
    let mut lo = 0.0f64;
    let mut hi = None;
    for i in 1..=SAMPLES {
        let t = i as f64 / SAMPLES as f64;
        if clearance(scene, start, target, standoff, t) < 0.0 {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else {
        return target;
    };
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if clearance(scene, start, target, standoff, mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    start + (target - start) * lo
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi);
    w - std::f64::consts::PI
}

/// g >= 0 opens (releasing and settling any attachment), g < 0 closes and
/// runs the grasp check when nothing is held yet.
fn apply_gripper(cfg: &EnvConfig, ep: &mut EpisodeState, grip: f64) {
    if grip >= 0.0 {
        ep.gripper.closed = false;
        if let Some(i) = ep.gripper.attached.take() {
            ep.hold = None;
            ep.scene.settle_rock(i);
        }
    } else {
        ep.gripper.closed = true;
        if ep.gripper.attached.is_none() {
            if let Some(i) = grasp_check(cfg, &ep.gripper, &ep.scene) {
                ep.gripper.attached = Some(i);
                ep.hold = Some(ep.gripper.pose().inverse().compose(&ep.scene.rocks[i].pose()));
            }
        }
    }
}

/// Grasp region box for a gripper state.
fn grasp_region(cfg: &EnvConfig, g: &GripperState) -> GraspRegion {
    GraspRegion {
        center: g.position - Vec3::new(0.0, 0.0, cfg.region_drop),
        yaw: g.yaw,
        half: cfg.region_half,
    }
}

/// The nearest rock whose centroid lies in the grasp region and whose
/// extent along the closing axis fits the aperture.
fn grasp_check(cfg: &EnvConfig, g: &GripperState, scene: &Scene) -> Option<usize> {
    let region = grasp_region(cfg, g);
    let axis = g.closing_axis();
    scene
        .rocks
        .iter()
        .enumerate()
        .filter(|(_, r)| region.contains(r.centroid()) && r.extent_along(axis) <= cfg.aperture)
        .min_by(|a, b| {
            let da = (a.1.centroid() - g.position).norm();
            let db = (b.1.centroid() - g.position).norm();
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
}

/// Evaluate the stage predicates on the post-action state and pay each
/// newly completed stage once.
fn advance_stages(cfg: &EnvConfig, ep: &EpisodeState, lift_height: f64) -> (StageFlags, f64) {
    let g = &ep.gripper;
    let scene = &ep.scene;
    let region = grasp_region(cfg, g);
    let reach = scene
        .nearest_rock(g.position)
        .is_some_and(|(_, d)| d < cfg.reach_radius);
    let touch = scene.rocks.iter().any(|r| {
        let (lo, hi) = r.aabb();
        region.intersects_aabb(lo, hi)
    });
    let grasp = g.attached.is_some();
    let lift = g
        .attached
        .is_some_and(|i| scene.rocks[i].centroid().z >= lift_height);
    let next = StageFlags {
        reached: ep.flags.reached || reach,
        touched: ep.flags.touched || touch,
        grasped: ep.flags.grasped || grasp,
        lifted: ep.flags.lifted || lift,
    };
    let mut stage_reward = 0.0;
    for (stage, before, now) in [
        (Stage::Reach, ep.flags.reached, next.reached),
        (Stage::Touch, ep.flags.touched, next.touched),
        (Stage::Grasp, ep.flags.grasped, next.grasped),
        (Stage::Lift, ep.flags.lifted, next.lifted),
    ] {
        if now && !before {
            stage_reward += stage.reward();
        }
    }
    (next, stage_reward)
}

/// Render the scene and assemble one observation frame: the visual payload
/// in the configured modality plus the proprioceptive vector.
fn capture_frame<R: Rng>(
    cfg: &EnvConfig,
    k: &CameraIntrinsics,
    scene: &Scene,
    noise_sigma: f64,
    rng: &mut R,
    gripper: &GripperState,
) -> Result<Frame, EnvError> {
    let out = render(scene, k, noise_sigma, rng);
    let data = match cfg.obs {
        ObsMode::Octree => ObsData::Octree(encode_view(
            &out.depth,
            &out.intensity,
            k,
            &scene.camera,
            cfg.volume_center,
            cfg.volume_extent,
            cfg.octree_depth,
            cfg.normals_k,
        )?),
        ObsMode::Image => ObsData::Image {
            depth: out.depth,
            intensity: out.intensity,
        },
    };
    Ok(Frame {
        data,
        proprio: proprio(gripper),
    })
}

/// Proprioception: gripper position, yaw as the 6D rotation encoding, and
/// the open/closed state.
pub fn proprio(g: &GripperState) -> [f32; PROPRIO_DIM] {
    let r6 = rot_to_6d(&Mat3::rot_z(g.yaw)).as_array();
    [
        g.position.x as f32,
        g.position.y as f32,
        g.position.z as f32,
        r6[0] as f32,
        r6[1] as f32,
        r6[2] as f32,
        r6[3] as f32,
        r6[4] as f32,
        r6[5] as f32,
        g.g_s(),
    ]
}

/// Depth + intensity images to an octree observation: unproject, move to
/// the world frame, crop to the observation volume, estimate normals and
/// bin. An empty or near-empty crop still encodes (normals fall back to
/// facing the camera when PCA lacks neighbors).
#[allow(clippy::too_many_arguments)]
pub fn encode_view(
    depth: &Image,
    intensity: &Image,
    k: &CameraIntrinsics,
    cam_pose: &Pose,
    center: Vec3,
    extent: f64,
    octree_depth: u8,
    normals_k: usize,
) -> Result<Octree, EnvError> {
    let cloud = unproject(depth, intensity, k)?;
    let cloud = transform_cloud(&cloud, cam_pose);
    let cloud = crop_cloud(&cloud, center, extent);
    let viewpoint = cam_pose.translation;
    let normals = if cloud.len() >= normals_k {
        estimate_normals(&cloud, normals_k, viewpoint)?
    } else {
        cloud
            .points
            .iter()
            .map(|p| {
                (viewpoint - p.position)
                    .normalized()
                    .unwrap_or(Vec3::new(0.0, 0.0, 1.0))
            })
            .collect()
    };
    Ok(build_octree(&cloud, &normals, center, extent, octree_depth)?)
}

#[cfg(test)]
impl GraspEnv {
    /// Test hook: append an outcome without running an episode.
    pub(crate) fn record_outcome(&mut self, success: bool) {
        self.window.push(success);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octree::serialize_octree;
    use crate::scene::{flat_params, ObjectConfig, SceneParams};

    fn flat_cfg() -> EnvConfig {
        let mut c = EnvConfig::default();
        c.obs = ObsMode::Image;
        c.camera_width = 32;
        c.camera_height = 32;
        c.scene.terrain = flat_params();
        c
    }

    fn single_rock_episode(seed: u64, x: f64, y: f64) -> EpisodeConfig {
        EpisodeConfig {
            seed,
            objects: vec![ObjectConfig {
                mesh_seed: 5,
                pose: Pose::from_translation(Vec3::new(x, y, 0.05)),
                density: 2000.0,
                friction: 0.7,
                albedo: 0.5,
            }],
            terrain_seed: 3,
            sun_azimuth: 0.8,
            sun_elevation: 0.9,
            camera_jitter: Vec3::ZERO,
            noise_sigma: 0.0,
        }
    }

    /// Step toward `target` along clamped per-axis deltas until the gripper
    /// lands on it exactly, logging every result.
    fn drive_to(env: &mut GraspEnv, target: Vec3, grip: f64, log: &mut Vec<StepResult>) {
        let s = env.config().translation_scale;
        for _ in 0..80 {
            let pos = env.gripper().unwrap().position;
            let d = target - pos;
            if d.norm() < 1e-9 {
                return;
            }
            let a = Action::new(
                (d.x / s).clamp(-1.0, 1.0),
                (d.y / s).clamp(-1.0, 1.0),
                (d.z / s).clamp(-1.0, 1.0),
                0.0,
                grip,
            );
            let r = env.step(&a).unwrap();
            let done = r.done;
            log.push(r);
            if done {
                return;
            }
        }
        panic!("drive_to did not converge on {target:?}");
    }

    fn stage_transitions(log: &[StepResult]) -> [u32; 4] {
        let mut prev = StageFlags::default();
        let mut n = [0u32; 4];
        for r in log {
            let f = r.info.flags;
            n[0] += (f.reached && !prev.reached) as u32;
            n[1] += (f.touched && !prev.touched) as u32;
            n[2] += (f.grasped && !prev.grasped) as u32;
            n[3] += (f.lifted && !prev.lifted) as u32;
            prev = f;
        }
        n
    }

    #[test]
    fn scripted_episode_collects_every_stage_exactly_once() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(11, 0.05, 0.0)).unwrap();
        assert_eq!(env.lift_height(), 0.075);
        let rock = env.scene().unwrap().rocks[0].centroid();
        let drop = env.config().region_drop;
        let mut log = Vec::new();

        // Approach above the rock, descend to the grasp pose, close, lift.
        drive_to(&mut env, Vec3::new(rock.x, rock.y, 0.18), 1.0, &mut log);
        drive_to(&mut env, rock + Vec3::new(0.0, 0.0, drop), 1.0, &mut log);
        let r = env.step(&Action::new(0.0, 0.0, 0.0, 0.0, -1.0)).unwrap();
        log.push(r);
        assert!(env.gripper().unwrap().attached.is_some(), "close should attach");
        let lift_to = Vec3::new(rock.x, rock.y, env.lift_height() + drop + 0.02);
        drive_to(&mut env, lift_to, -1.0, &mut log);

        let last = log.last().unwrap();
        assert!(last.done && last.info.success);
        assert!(last.info.flags.lifted);
        // Each stage paid exactly once; the stage sum hits the theoretical
        // maximum exactly.
        assert_eq!(stage_transitions(&log), [1, 1, 1, 1]);
        let stage_sum: f64 = log.iter().map(|r| r.info.stage_reward).sum();
        assert_eq!(stage_sum, 585.0);
        let total: f64 = log.iter().map(|r| r.reward).sum();
        let steps = log.len() as f64;
        assert!((total - (585.0 - 0.1 * steps)).abs() < 1e-9);
        // The success lands in the rolling window.
        assert_eq!(env.success_rate(), 1.0 / env.config().window_len as f64);
        // Flags are monotone along the episode.
        let mut prev = StageFlags::default();
        for r in &log {
            let f = r.info.flags;
            assert!(f.reached >= prev.reached && f.touched >= prev.touched);
            assert!(f.grasped >= prev.grasped && f.lifted >= prev.lifted);
            prev = f;
        }
    }

    #[test]
    fn stage_free_steps_pay_the_bare_penalty() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(2, 0.12, 0.12)).unwrap();
        let pos = env.gripper().unwrap().position;
        let rock = env.scene().unwrap().rocks[0].centroid();
        assert!((rock - pos).norm() > 0.25, "pick a seed that spawns far away");
        // Moving straight up cannot complete any stage.
        let r = env.step(&Action::new(0.0, 0.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(r.reward, -0.1);
        assert_eq!(r.info.stage_reward, 0.0);
        assert_eq!(r.info.flags, StageFlags::default());
    }

    #[test]
    fn translation_and_yaw_map_to_metric_ranges_exactly() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(4, 0.12, -0.12)).unwrap();
        let g0 = *env.gripper().unwrap();
        let ws_hi = env.config().workspace_center.x + env.config().workspace_half.x;
        let dir = if g0.position.x + 0.1 <= ws_hi { 1.0 } else { -1.0 };
        let r = env.step(&Action::new(dir, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let g1 = *env.gripper().unwrap();
        assert!((g1.position.x - (g0.position.x + dir * 0.1)).abs() < 1e-12);
        assert_eq!(g1.position.y, g0.position.y);
        assert_eq!(g1.position.z, g0.position.z);
        assert_eq!(g1.yaw, g0.yaw);
        assert!(!r.done);

        let r = env.step(&Action::new(0.0, 0.0, 0.0, 1.0, 1.0)).unwrap();
        let g2 = *env.gripper().unwrap();
        let turn = (g2.yaw - g1.yaw - std::f64::consts::FRAC_PI_4)
            .rem_euclid(2.0 * std::f64::consts::PI);
        assert!(turn < 1e-9 || 2.0 * std::f64::consts::PI - turn < 1e-9, "turn = {turn}");
        assert_eq!(g2.position.x, g1.position.x);
        assert!(!r.done);
    }

    #[test]
    fn oversized_actions_clamp_to_full_scale() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(4, 0.12, -0.12)).unwrap();
        let z0 = env.gripper().unwrap().position.z;
        env.step(&Action::new(0.0, 0.0, 7.5, 0.0, 1.0)).unwrap();
        let z1 = env.gripper().unwrap().position.z;
        let top = env.config().workspace_center.z + env.config().workspace_half.z;
        assert!((z1 - (z0 + 0.1).min(top)).abs() < 1e-12);
    }

    #[test]
    fn descent_stops_at_the_terrain_standoff() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(6, 0.12, 0.12)).unwrap();
        // Flat terrain sits at height zero under the whole workspace.
        for _ in 0..6 {
            env.step(&Action::new(0.0, 0.0, -1.0, 0.0, 1.0)).unwrap();
        }
        let z = env.gripper().unwrap().position.z;
        let standoff = env.config().standoff;
        assert!(z >= standoff && z - standoff < 1e-5, "z = {z}");

        // From 5 cm of clearance a further -10 cm command stops at the
        // standoff again instead of passing through.
        env.step(&Action::new(0.0, 0.0, 0.4, 0.0, 1.0)).unwrap();
        env.step(&Action::new(0.0, 0.0, -1.0, 0.0, 1.0)).unwrap();
        let z = env.gripper().unwrap().position.z;
        assert!(z >= standoff && z - standoff < 1e-5, "z = {z}");
    }

    #[test]
    fn grasp_needs_the_region_and_the_aperture() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(2, 0.12, 0.12)).unwrap();
        let rock = env.scene().unwrap().rocks[0].centroid();
        assert!((rock - env.gripper().unwrap().position).norm() > 0.2);
        // Closing far away attaches nothing.
        env.step(&Action::new(0.0, 0.0, 0.0, 0.0, -1.0)).unwrap();
        assert!(env.gripper().unwrap().attached.is_none());
        assert!(env.gripper().unwrap().closed);

        // Reopen, move over the rock and close: the centroid sits at the
        // region center, the rock fits the aperture, so it attaches.
        let drop = env.config().region_drop;
        let mut log = Vec::new();
        drive_to(&mut env, Vec3::new(rock.x, rock.y, 0.15), 1.0, &mut log);
        drive_to(&mut env, rock + Vec3::new(0.0, 0.0, drop), 1.0, &mut log);
        let axis = env.gripper().unwrap().closing_axis();
        assert!(env.scene().unwrap().rocks[0].extent_along(axis) <= env.config().aperture);
        env.step(&Action::new(0.0, 0.0, 0.0, 0.0, -1.0)).unwrap();
        let g = env.gripper().unwrap();
        assert_eq!(g.attached, Some(0));
        assert!(g.closed);
        assert_eq!(g.g_s(), -1.0);
    }

    #[test]
    fn oversized_rocks_exceed_the_aperture() {
        let mut cfg = flat_cfg();
        cfg.scene.rock_radius = (0.08, 0.09);
        let mut env = GraspEnv::new(cfg, Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(9, 0.0, 0.0)).unwrap();
        let rock = env.scene().unwrap().rocks[0].centroid();
        let drop = env.config().region_drop;
        let mut log = Vec::new();
        drive_to(&mut env, Vec3::new(rock.x, rock.y, 0.2), 1.0, &mut log);
        drive_to(&mut env, rock + Vec3::new(0.0, 0.0, drop), 1.0, &mut log);
        let axis = env.gripper().unwrap().closing_axis();
        let extent = env.scene().unwrap().rocks[0].extent_along(axis);
        assert!(extent > env.config().aperture, "extent = {extent}");
        env.step(&Action::new(0.0, 0.0, 0.0, 0.0, -1.0)).unwrap();
        assert!(env.gripper().unwrap().attached.is_none());
    }

    #[test]
    fn attached_rocks_follow_and_release_settles_them() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(11, 0.05, 0.0)).unwrap();
        let rock = env.scene().unwrap().rocks[0].centroid();
        let drop = env.config().region_drop;
        let mut log = Vec::new();
        drive_to(&mut env, Vec3::new(rock.x, rock.y, 0.18), 1.0, &mut log);
        drive_to(&mut env, rock + Vec3::new(0.0, 0.0, drop), 1.0, &mut log);
        env.step(&Action::new(0.0, 0.0, 0.0, 0.0, -1.0)).unwrap();
        assert_eq!(env.gripper().unwrap().attached, Some(0));
        let before = env.scene().unwrap().rocks[0].centroid();

        // Carry 2 cm upward (still below the lift requirement).
        env.step(&Action::new(0.0, 0.0, 0.2, 0.0, -1.0)).unwrap();
        let carried = env.scene().unwrap().rocks[0].centroid();
        assert!((carried.z - (before.z + 0.02)).abs() < 1e-9);
        assert!((carried.x - before.x).abs() < 1e-9);
        assert!(env.gripper().unwrap().attached.is_some());

        // Release: the rock settles back onto the terrain.
        env.step(&Action::new(0.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let g = env.gripper().unwrap();
        assert!(g.attached.is_none());
        assert!(!g.closed);
        let settled = env.scene().unwrap().rocks[0].centroid();
        assert!((settled.z - before.z).abs() < 1e-9, "settled = {settled:?}");
    }

    #[test]
    fn timeout_finishes_the_episode_and_further_steps_fail() {
        let mut cfg = flat_cfg();
        cfg.max_steps = 3;
        let mut env = GraspEnv::new(cfg, Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(2, 0.12, 0.12)).unwrap();
        let noop = Action::new(0.0, 0.0, 0.0, 0.0, 1.0);
        for want_done in [false, false, true] {
            let r = env.step(&noop).unwrap();
            assert_eq!(r.done, want_done);
            if want_done {
                assert!(!r.info.success);
            }
        }
        assert!(matches!(env.step(&noop), Err(EnvError::StepAfterDone)));
        // Reset clears the terminal state.
        env.reset().unwrap();
        env.step(&noop).unwrap();
    }

    #[test]
    fn step_before_reset_is_rejected() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        let r = env.step(&Action::new(0.0, 0.0, 0.0, 0.0, 1.0));
        assert!(matches!(r, Err(EnvError::NotReset)));
    }

    #[test]
    fn invalid_episode_configs_are_rejected() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        let mut cfg = single_rock_episode(1, 0.0, 0.0);
        cfg.objects.clear();
        assert!(matches!(
            env.reset_with(cfg),
            Err(EnvError::InvalidConfig(_))
        ));
    }

    #[test]
    fn curriculum_ratchets_and_recomputes_at_reset() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        assert_eq!(env.lift_height(), 0.075);
        for _ in 0..10 {
            env.record_outcome(true);
        }
        env.reset().unwrap();
        let h10 = env.lift_height();
        assert_eq!(h10, curriculum_height(0.075, 0.25, 0.33, 0.10));
        for _ in 0..23 {
            env.record_outcome(true);
        }
        env.reset().unwrap();
        assert_eq!(env.lift_height(), 0.25);
        // A flood of failures empties the window but the requirement holds.
        for _ in 0..100 {
            env.record_outcome(false);
        }
        assert_eq!(env.success_rate(), 0.0);
        env.reset().unwrap();
        assert_eq!(env.lift_height(), 0.25);
    }

    #[test]
    fn identical_configs_and_actions_replay_identically() {
        let make = || {
            let mut c = EnvConfig::default();
            c.camera_width = 48;
            c.camera_height = 48;
            GraspEnv::new(c, Randomization::Full, 77).unwrap()
        };
        let mut a = make();
        let mut b = make();
        a.reset().unwrap();
        b.reset().unwrap();
        assert_eq!(a.episode_config(), b.episode_config());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..8 {
            let act = Action::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let ra = a.step(&act).unwrap();
            let rb = b.step(&act).unwrap();
            assert_eq!(ra.reward, rb.reward);
            assert_eq!(ra.info.flags, rb.info.flags);
            assert_eq!(ra.info.gripper_position, rb.info.gripper_position);
            let fa = &ra.obs.frames[1];
            let fb = &rb.obs.frames[1];
            assert_eq!(fa.proprio, fb.proprio);
            match (&fa.data, &fb.data) {
                (ObsData::Octree(oa), ObsData::Octree(ob)) => {
                    assert_eq!(serialize_octree(oa), serialize_octree(ob));
                }
                _ => panic!("octree mode expected"),
            }
            if ra.done {
                break;
            }
        }
    }

    #[test]
    fn random_policies_stay_inside_the_workspace_envelope() {
        let mut cfg = EnvConfig::default();
        cfg.obs = ObsMode::Image;
        cfg.camera_width = 24;
        cfg.camera_height = 24;
        cfg.max_steps = 25;
        let mut env = GraspEnv::new(cfg, Randomization::Full, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2 {
            env.reset().unwrap();
            let mut ret = 0.0;
            let mut steps = 0.0;
            loop {
                let act = Action::new(
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let r = env.step(&act).unwrap();
                ret += r.reward;
                steps += 1.0;
                let g = env.gripper().unwrap();
                let c = env.config().workspace_center;
                let h = env.config().workspace_half;
                assert!((g.position.x - c.x).abs() <= h.x + 1e-9);
                assert!((g.position.y - c.y).abs() <= h.y + 1e-9);
                assert!((g.position.z - c.z).abs() <= h.z + 1e-9);
                let ground = env
                    .scene()
                    .unwrap()
                    .terrain
                    .height_at(g.position.x, g.position.y);
                assert!(g.position.z >= ground + env.config().standoff - 1e-9);
                if r.done {
                    break;
                }
            }
            assert!(ret >= -10.0 - 1e-9);
            assert!(ret <= 585.0 - 0.1 * steps + 1e-9);
        }
    }

    #[test]
    fn reset_duplicates_the_initial_frame_and_steps_shift_the_stack() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        let obs = env.reset_with(single_rock_episode(2, 0.12, 0.12)).unwrap();
        assert!(std::sync::Arc::ptr_eq(&obs.frames[0], &obs.frames[1]));
        assert!(obs.frames[0].proprio.iter().all(|v| v.is_finite()));
        assert_eq!(obs.frames[0].proprio[9], 1.0);
        let r = env.step(&Action::new(0.0, 0.0, 0.5, 0.0, 1.0)).unwrap();
        assert!(std::sync::Arc::ptr_eq(&r.obs.frames[0], &obs.frames[1]));
        assert!(!std::sync::Arc::ptr_eq(&r.obs.frames[1], &obs.frames[1]));
    }

    #[test]
    fn sampled_resets_differ_across_episodes() {
        let mut cfg = flat_cfg();
        cfg.camera_width = 16;
        cfg.camera_height = 16;
        let mut env = GraspEnv::new(cfg, Randomization::Full, 21).unwrap();
        env.reset().unwrap();
        let c0 = env.episode_config().unwrap().clone();
        let p0 = env.gripper().unwrap().position;
        env.reset().unwrap();
        let c1 = env.episode_config().unwrap().clone();
        let p1 = env.gripper().unwrap().position;
        assert_ne!(c0.seed, c1.seed);
        assert_ne!(p0, p1);
    }

    #[test]
    fn empty_views_encode_to_empty_octrees_with_valid_proprio() {
        let mut cfg = EnvConfig::default();
        cfg.camera_width = 48;
        cfg.camera_height = 48;
        // Observation volume floats above everything the camera can see.
        cfg.volume_center = Vec3::new(0.0, 0.0, 0.42);
        cfg.volume_extent = 0.10;
        let mut env = GraspEnv::new(cfg, Randomization::Full, 2).unwrap();
        let obs = env.reset().unwrap();
        match &obs.frames[1].data {
            ObsData::Octree(o) => assert!(o.leaf_codes().is_empty()),
            _ => panic!("octree mode expected"),
        }
        assert!(obs.frames[1].proprio.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn octree_leaves_concentrate_at_a_floated_rock() {
        // Hand-placed scene: one rock floated into an observation volume
        // that excludes the terrain, so every occupied leaf belongs to the
        // rock surface.
        let mut scene_params = SceneParams::default();
        scene_params.terrain = flat_params();
        let ep = single_rock_episode(13, 0.0, 0.0);
        let mut scene = assemble(&ep, &scene_params);
        let pose = scene.rocks[0].pose();
        scene.set_rock_pose(0, Pose::new(pose.rotation, Vec3::new(0.0, 0.0, 0.15)));
        let rock = scene.rocks[0].centroid();

        let k = CameraIntrinsics::standard(128, 128);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = render(&scene, &k, 0.0, &mut rng);
        let center = Vec3::new(0.0, 0.0, 0.15);
        let extent = 0.2;
        let o = encode_view(&out.depth, &out.intensity, &k, &scene.camera, center, extent, 4, 8)
            .unwrap();
        assert!(o.leaf_codes().len() >= 8, "rock barely visible: {}", o.leaf_codes().len());

        let dim = 1u32 << 4;
        let cell = extent / dim as f64;
        let min = center - Vec3::new(extent, extent, extent) * 0.5;
        let mut mean = Vec3::ZERO;
        for &code in o.leaf_codes() {
            let (ix, iy, iz) = crate::octree::morton_decode(code, 4);
            mean = mean
                + Vec3::new(
                    min.x + (ix as f64 + 0.5) * cell,
                    min.y + (iy as f64 + 0.5) * cell,
                    min.z + (iz as f64 + 0.5) * cell,
                );
        }
        mean = mean * (1.0 / o.leaf_codes().len() as f64);
        assert!((mean - rock).norm() < 0.03, "mean = {mean:?}, rock = {rock:?}");
    }

    #[test]
    fn proprio_encodes_pose_and_gripper_state() {
        let g = GripperState {
            position: Vec3::new(0.1, -0.2, 0.3),
            yaw: 0.7,
            closed: true,
            attached: None,
        };
        let p = proprio(&g);
        assert_eq!(p[0], 0.1);
        assert_eq!(p[9], -1.0);
        let r6 = rot_to_6d(&Mat3::rot_z(0.7)).as_array();
        for i in 0..6 {
            assert!((p[3 + i] as f64 - r6[i]).abs() < 1e-7);
        }
        let back = crate::geometry::rot6d_to_mat(&rot_to_6d(&Mat3::rot_z(0.7))).unwrap();
        assert!(back.is_rotation(1e-9));
    }

    #[test]
    fn step_records_round_trip_through_json() {
        let mut env = GraspEnv::new(flat_cfg(), Randomization::Full, 0).unwrap();
        env.reset_with(single_rock_episode(2, 0.12, 0.12)).unwrap();
        let act = Action::new(0.3, -0.2, 0.1, 0.5, 1.0);
        let r = env.step(&act).unwrap();
        let rec = StepRecord::new(&act, &r);
        let line = serde_json::to_string(&rec).unwrap();
        let back: StepRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(rec, back);
        let cfg_json = serde_json::to_string(env.episode_config().unwrap()).unwrap();
        let cfg_back: EpisodeConfig = serde_json::from_str(&cfg_json).unwrap();
        assert_eq!(*env.episode_config().unwrap(), cfg_back);
    }
}
