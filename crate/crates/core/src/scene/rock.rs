use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

use super::noise::value_noise_3d;

/// Indexed triangle mesh with shared vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            lo.z = lo.z.min(v.z);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
            hi.z = hi.z.max(v.z);
        }
        (lo, hi)
    }

    /// True when every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (e.0.min(e.1), e.0.max(e.1));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }
}

/// A displaced icosphere at two levels of detail. The same noise field
/// displaces both, so their shapes track each other.
#[derive(Debug, Clone, PartialEq)]
pub struct RockMesh {
    /// Subdivision 2, for visual output.
    pub render: TriMesh,
    /// Subdivision 1, used by ray casting and contact checks.
    pub collision: TriMesh,
    pub watertight: bool,
    /// Base radius before displacement.
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RockParams {
    /// Radial displacement as a fraction of the radius.
    pub displacement: f64,
    /// Lattice frequency of the displacement noise on the unit sphere.
    pub noise_frequency: f64,
}

impl Default for RockParams {
    fn default() -> Self {
        RockParams {
            displacement: 0.3,
            noise_frequency: 1.2,
        }
    }
}

/// Unit icosahedron with outward-wound faces.
fn icosahedron() -> TriMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let vertices: Vec<Vec3> = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
        .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    // Enforce outward winding; the displaced mesh stays star-shaped about
    // the origin, so this orientation survives displacement.
    for t in &mut triangles {
        let [a, b, c] = *t;
        let (va, vb, vc) = (
            vertices[a as usize],
            vertices[b as usize],
            vertices[c as usize],
        );
        let n = (vb - va).cross(vc - va);
        if n.dot(va + vb + vc) < 0.0 {
            t.swap(1, 2);
        }
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// One step of loop-style midpoint subdivision, re-projected to the unit
/// sphere. Shared midpoints are merged so the result stays watertight.
fn subdivide(mesh: &TriMesh) -> TriMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
    let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let m = (vertices[a as usize] + vertices[b as usize]) * 0.5;
            vertices.push(m.normalized().unwrap());
            (vertices.len() - 1) as u32
        })
    };
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([b, bc, ab]);
        triangles.push([c, ca, bc]);
        triangles.push([ab, bc, ca]);
    }
    TriMesh {
        vertices,
        triangles,
    }
}

/// Three-octave radial noise in [-1, 1] at a unit-sphere position.
fn radial_noise(seed: u64, p: Vec3, frequency: f64) -> f64 {
    let mut sum = 0.0;
    for octave in 0..3u32 {
        let f = frequency * (1 << octave) as f64;
        let amp = 1.0 / (1 << octave) as f64;
        sum += amp * value_noise_3d(seed, octave, p.x * f, p.y * f, p.z * f);
    }
    sum / 1.75
}

fn displace(unit_sphere: &TriMesh, seed: u64, radius: f64, params: &RockParams) -> TriMesh {
    TriMesh {
        vertices: unit_sphere
            .vertices
            .iter()
            .map(|&u| {
                let n = radial_noise(seed, u, params.noise_frequency);
                u * (radius * (1.0 + params.displacement * n))
            })
            .collect(),
        triangles: unit_sphere.triangles.clone(),
    }
}

/// Generate a rock with the default displacement.
pub fn gen_rock(seed: u64, radius_range: (f64, f64)) -> RockMesh {
    gen_rock_with(seed, radius_range, &RockParams::default())
}

/// Icosphere at subdivision 2 (render) and 1 (collision), vertices moved
/// radially by multi-octave noise within +-(displacement * radius). The
/// displacement field is shared between the LODs, and collision vertices
/// are a subset of render vertices, so the two stay aligned.
pub fn gen_rock_with(seed: u64, radius_range: (f64, f64), params: &RockParams) -> RockMesh {
    assert!(
        radius_range.0 > 0.0 && radius_range.0 <= radius_range.1,
        "need 0 < radius_min <= radius_max"
    );
    assert!(params.displacement.abs() < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50c4);
    let radius = rng.gen_range(radius_range.0..=radius_range.1);

    let coarse = subdivide(&icosahedron());
    let fine = subdivide(&coarse);
    let collision = displace(&coarse, seed, radius, params);
    let render = displace(&fine, seed, radius, params);
    let watertight = render.is_watertight() && collision.is_watertight();
    RockMesh {
        render,
        collision,
        watertight,
        radius,
    }
}

/// Wavefront-style ASCII export: `v x y z` lines then 1-indexed `f` lines.
pub fn export_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::mesh_is_convex;

    #[test]
    fn same_seed_identical() {
        let a = gen_rock(31, (0.02, 0.06));
        let b = gen_rock(31, (0.02, 0.06));
        assert_eq!(a, b);
        let c = gen_rock(32, (0.02, 0.06));
        assert_ne!(a.render.vertices, c.render.vertices);
    }

    #[test]
    fn zero_displacement_is_exact_icosphere() {
        let params = RockParams {
            displacement: 0.0,
            ..RockParams::default()
        };
        let rock = gen_rock_with(8, (0.05, 0.05), &params);
        assert_eq!(rock.radius, 0.05);
        for v in rock.render.vertices.iter().chain(&rock.collision.vertices) {
            assert!((v.norm() - 0.05).abs() < 1e-6 * 0.05);
        }
        assert!(mesh_is_convex(&rock.render));
    }

    #[test]
    fn expected_triangle_and_vertex_counts() {
        let rock = gen_rock(1, (0.02, 0.06));
        assert_eq!(rock.collision.triangles.len(), 80);
        assert_eq!(rock.render.triangles.len(), 320);
        assert_eq!(rock.collision.vertices.len(), 42);
        assert_eq!(rock.render.vertices.len(), 162);
        assert!(rock.collision.triangles.len() <= rock.render.triangles.len());
    }

    #[test]
    fn hundred_seeds_bounded_nonconvex_watertight() {
        let mut nonconvex = 0;
        for seed in 0..100 {
            let rock = gen_rock(seed, (0.02, 0.06));
            let r = rock.radius;
            assert!((0.02..=0.06).contains(&r));
            for v in rock.render.vertices.iter().chain(&rock.collision.vertices) {
                let n = v.norm();
                assert!(
                    n >= 0.7 * r - 1e-12 && n <= 1.3 * r + 1e-12,
                    "seed {seed}: |v| = {n}, r = {r}"
                );
            }
            assert!(rock.watertight, "seed {seed} not watertight");
            // Both LODs cover the same body within 10% per axis.
            let (lo_r, hi_r) = rock.render.bounds();
            let (lo_c, hi_c) = rock.collision.bounds();
            for (a, b) in [
                (hi_r.x - lo_r.x, hi_c.x - lo_c.x),
                (hi_r.y - lo_r.y, hi_c.y - lo_c.y),
                (hi_r.z - lo_r.z, hi_c.z - lo_c.z),
            ] {
                assert!(
                    (a - b).abs() <= 0.10 * a.max(b),
                    "seed {seed}: bbox extents {a} vs {b}"
                );
            }
            if !mesh_is_convex(&rock.render) {
                nonconvex += 1;
            }
        }
        assert!(nonconvex >= 10, "only {nonconvex}/100 rocks non-convex");
    }

    #[test]
    fn obj_export_shape() {
        let rock = gen_rock(2, (0.02, 0.06));
        let obj = export_obj(&rock.collision);
        let v_lines = obj.lines().filter(|l| l.starts_with("v ")).count();
        let f_lines = obj.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(v_lines, 42);
        assert_eq!(f_lines, 80);
        assert!(obj.lines().all(|l| l.starts_with("v ") || l.starts_with("f ")));
        // Faces are 1-indexed.
        assert!(!obj.contains("f 0"));
    }
}
