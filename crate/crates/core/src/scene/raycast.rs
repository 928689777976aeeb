use crate::geometry::Vec3;

use super::terrain::Terrain;
use super::{PlacedRock, Scene};

/// Which surface a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitObject {
    Terrain,
    Rock(usize),
}

/// Nearest intersection along a ray. `t` is in units of the (possibly
/// unnormalized) ray direction.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub t: f64,
    pub point: Vec3,
    /// Unit surface normal, oriented toward the ray origin.
    pub normal: Vec3,
    pub object: HitObject,
}

/// Moller-Trumbore intersection; returns `t > 1e-9` or nothing. Edges are
/// inclusive so cell-boundary hits are never lost between triangles.
pub(crate) fn ray_triangle(orig: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-16 {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 1e-9).then_some(t)
}

/// Entry/exit parameters of a ray against an axis-aligned box, clipped to
/// t >= 0. Empty when the ray misses.
fn ray_aabb(orig: Vec3, dir: Vec3, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let (o, d, l, h) = match axis {
            0 => (orig.x, dir.x, lo.x, hi.x),
            1 => (orig.y, dir.y, lo.y, hi.y),
            _ => (orig.z, dir.z, lo.z, hi.z),
        };
        if d.abs() < 1e-300 {
            if o < l || o > h {
                return None;
            }
        } else {
            let inv = 1.0 / d;
            let (mut a, mut b) = ((l - o) * inv, (h - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

/// Nearest terrain hit via a 2D grid walk over the heightfield cells.
/// Cells are visited in increasing t, so the first intersected cell yields
/// the nearest hit; per-cell height bounds skip the triangle tests almost
/// everywhere.
fn terrain_raycast(terr: &Terrain, orig: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
    let res = terr.resolution as i64;
    let pitch = terr.pitch();
    let lo = Vec3::new(terr.origin.x, terr.origin.y, terr.min_height);
    let hi = Vec3::new(
        terr.origin.x + terr.size,
        terr.origin.y + terr.size,
        terr.max_height,
    );
    let (t0, t1) = ray_aabb(orig, dir, lo, hi)?;

    let start = orig + dir * t0;
    let mut ix = (((start.x - terr.origin.x) / pitch).floor() as i64).clamp(0, res - 1);
    let mut iy = (((start.y - terr.origin.y) / pitch).floor() as i64).clamp(0, res - 1);
    let step_x: i64 = if dir.x >= 0.0 { 1 } else { -1 };
    let step_y: i64 = if dir.y >= 0.0 { 1 } else { -1 };
    let t_delta_x = if dir.x != 0.0 {
        (pitch / dir.x).abs()
    } else {
        f64::INFINITY
    };
    let t_delta_y = if dir.y != 0.0 {
        (pitch / dir.y).abs()
    } else {
        f64::INFINITY
    };
    let mut t_max_x = if dir.x != 0.0 {
        let next = terr.origin.x + (ix + i64::from(dir.x >= 0.0)) as f64 * pitch;
        (next - orig.x) / dir.x
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dir.y != 0.0 {
        let next = terr.origin.y + (iy + i64::from(dir.y >= 0.0)) as f64 * pitch;
        (next - orig.y) / dir.y
    } else {
        f64::INFINITY
    };

    let mut t_enter = t0;
    loop {
        let t_exit = t_max_x.min(t_max_y).min(t1);
        let (z_lo, z_hi) = terr.cell_bounds[(iy * res + ix) as usize];
        let z_a = orig.z + dir.z * t_enter;
        let z_b = orig.z + dir.z * t_exit;
        if z_a.max(z_b) >= z_lo - 1e-9 && z_a.min(z_b) <= z_hi + 1e-9 {
            let mut best: Option<(f64, Vec3)> = None;
            for tri in terr.cell_triangles(ix as usize, iy as usize) {
                if let Some(t) = ray_triangle(orig, dir, tri[0], tri[1], tri[2]) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        let n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
                        best = Some((t, n));
                    }
                }
            }
            if best.is_some() {
                return best;
            }
        }
        if t_max_x < t_max_y {
            t_enter = t_max_x;
            t_max_x += t_delta_x;
            ix += step_x;
            if !(0..res).contains(&ix) {
                return None;
            }
        } else {
            t_enter = t_max_y;
            t_max_y += t_delta_y;
            iy += step_y;
            if !(0..res).contains(&iy) {
                return None;
            }
        }
        if t_enter > t1 + 1e-12 {
            return None;
        }
    }
}

/// Nearest hit on one rock's collision mesh, gated by its bounding sphere.
fn rock_raycast(rock: &PlacedRock, orig: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
    let oc = orig - rock.bound_center();
    let a = dir.norm_sq();
    let b = 2.0 * oc.dot(dir);
    let c = oc.norm_sq() - rock.bound_radius() * rock.bound_radius();
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    if (-b + sq) / (2.0 * a) <= 0.0 {
        return None;
    }

    let verts = rock.world_verts();
    let mut best: Option<(f64, Vec3)> = None;
    for tri in &rock.mesh.collision.triangles {
        let a = verts[tri[0] as usize];
        let b = verts[tri[1] as usize];
        let c = verts[tri[2] as usize];
        if let Some(t) = ray_triangle(orig, dir, a, b, c) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, (b - a).cross(c - a)));
            }
        }
    }
    best
}

/// Nearest intersection of the ray with the terrain or any rock collision
/// mesh. `dir` need not be unit length; `t` is in its units.
pub fn raycast(scene: &Scene, orig: Vec3, dir: Vec3) -> Option<RayHit> {
    let mut best: Option<(f64, Vec3, HitObject)> = terrain_raycast(&scene.terrain, orig, dir)
        .map(|(t, n)| (t, n, HitObject::Terrain));
    for (i, rock) in scene.rocks.iter().enumerate() {
        if let Some((t, n)) = rock_raycast(rock, orig, dir) {
            if best.map_or(true, |(bt, _, _)| t < bt) {
                best = Some((t, n, HitObject::Rock(i)));
            }
        }
    }
    best.map(|(t, n, object)| {
        let mut normal = n.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        if normal.dot(dir) > 0.0 {
            normal = -normal;
        }
        RayHit {
            t,
            point: orig + dir * t,
            normal,
            object,
        }
    })
}

/// True when anything blocks the ray from a surface point toward the sun.
/// The origin is nudged along the surface normal to avoid re-hitting the
/// surface it starts on.
pub fn occluded(scene: &Scene, point: Vec3, normal: Vec3, toward: Vec3) -> bool {
    raycast(scene, point + normal * 1e-6, toward).is_some()
}
