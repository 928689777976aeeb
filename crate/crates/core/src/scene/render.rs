use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{CameraIntrinsics, Image, Mat3, Pose, Vec3};

use super::raycast::{occluded, raycast, HitObject};
use super::Scene;

/// Camera-to-world pose with +z toward `target`, +y down in the image and
/// +x to the right. Falls back to a +x reference when looking straight up
/// or down.
pub fn look_at(pos: Vec3, target: Vec3) -> Pose {
    let forward = (target - pos)
        .normalized()
        .expect("camera position and target coincide");
    let up = Vec3::new(0.0, 0.0, 1.0);
    let x = forward
        .cross(up)
        .normalized()
        .unwrap_or_else(|| forward.cross(Vec3::new(1.0, 0.0, 0.0)).normalized().unwrap());
    let y = forward.cross(x);
    Pose::new(Mat3::from_cols(x, y, forward), pos)
}

/// Aligned depth and intensity images from one ray-cast pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// Distance along the optical axis; 0 marks a miss.
    pub depth: Image,
    /// Lambertian shading in [0, 1]; 0 marks a miss.
    pub intensity: Image,
}

/// Ray-cast the scene through `scene.camera`. One primary ray per pixel
/// through its integer coordinates, one shadow ray per lit surface point.
/// Intensity is ambient plus albedo-scaled diffuse under the scene's sun:
/// clamp(0.05 + 0.95 * albedo * max(0, n . sun) * shadow). Gaussian noise
/// of standard deviation `noise_sigma` is then added to valid depth pixels
/// (row-major), then to every intensity pixel (clamped back to [0, 1]).
pub fn render<R: Rng>(
    scene: &Scene,
    k: &CameraIntrinsics,
    noise_sigma: f64,
    rng: &mut R,
) -> RenderOutput {
    let mut depth = Image::filled(k.width, k.height, 0.0);
    let mut intensity = Image::filled(k.width, k.height, 0.0);
    let cam = scene.camera;
    for v in 0..k.height {
        for u in 0..k.width {
            // dir has z = 1 in the camera frame, so the ray parameter t is
            // the depth along the optical axis.
            let dir = cam.rotation.mul_vec(k.ray_dir(u, v));
            let Some(hit) = raycast(scene, cam.translation, dir) else {
                continue;
            };
            let albedo = match hit.object {
                HitObject::Terrain => 1.0,
                HitObject::Rock(i) => scene.rocks[i].albedo,
            };
            let lambert = hit.normal.dot(scene.sun_dir).max(0.0);
            let lit = lambert > 0.0 && !occluded(scene, hit.point, hit.normal, scene.sun_dir);
            let diffuse = if lit { albedo * lambert } else { 0.0 };
            depth.set(u, v, hit.t as f32);
            intensity.set(u, v, (0.05 + 0.95 * diffuse).clamp(0.0, 1.0) as f32);
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma is finite and positive");
        for d in depth.data.iter_mut().filter(|d| **d > 0.0) {
            *d += normal.sample(rng) as f32;
        }
        for i in intensity.data.iter_mut() {
            *i = (*i + normal.sample(rng) as f32).clamp(0.0, 1.0);
        }
    }
    RenderOutput { depth, intensity }
}
