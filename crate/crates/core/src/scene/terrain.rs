use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

use super::noise::value_noise_2d;

/// Radially symmetric depression subtracted from the noise field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crater {
    /// Center in terrain-local coordinates (meters from the min corner).
    pub center: (f64, f64),
    pub radius: f64,
    pub depth: f64,
}

impl Crater {
    /// Smooth bump profile: depth * (1 - (r/R)^2)^2 inside the rim, zero
    /// outside; slope vanishes at both the center and the rim.
    fn depression(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let q = (dx * dx + dy * dy) / (self.radius * self.radius);
        if q >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - q;
        self.depth * s * s
    }
}

/// Knobs for terrain synthesis; the defaults match the nominal generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    /// Base noise amplitude; octaves contribute a, a/2, a/4.
    pub amplitude: f64,
    pub crater_count: (u32, u32),
    pub crater_radius: (f64, f64),
    pub crater_depth: (f64, f64),
}

impl Default for TerrainParams {
    fn default() -> Self {
        TerrainParams {
            amplitude: 0.04,
            crater_count: (1, 3),
            crater_radius: (0.05, 0.15),
            crater_depth: (0.01, 0.03),
        }
    }
}

/// Square heightfield; vertex grid, triangulated per cell for rendering and
/// contact. Heights are bounded by 1.75 * amplitude + max crater depth
/// (10 cm at the defaults: overlapping craters take the deepest, they do
/// not stack).
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    /// (resolution + 1)^2 vertex heights, row-major with x fastest.
    pub heights: Vec<f64>,
    /// Cells per side.
    pub resolution: usize,
    /// Edge length in meters.
    pub size: f64,
    /// Min corner; the field is centered on (0, 0) at z = 0 mean.
    pub origin: Vec3,
    /// Per-cell friction, kept for config parity (unused by kinematics).
    pub friction: Vec<f64>,
    pub craters: Vec<Crater>,
    /// Per-cell (min, max) vertex height, for ray-march early out.
    pub(crate) cell_bounds: Vec<(f64, f64)>,
    pub(crate) min_height: f64,
    pub(crate) max_height: f64,
}

impl Terrain {
    pub fn pitch(&self) -> f64 {
        self.size / self.resolution as f64
    }

    fn vertex_height(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * (self.resolution + 1) + ix]
    }

    /// Vertex position in world coordinates.
    pub fn vertex(&self, ix: usize, iy: usize) -> Vec3 {
        let p = self.pitch();
        self.origin + Vec3::new(ix as f64 * p, iy as f64 * p, self.vertex_height(ix, iy))
    }

    /// The two triangles of cell (cx, cy), counter-clockwise from above.
    /// The cell is split along its (0,0)-(1,1) diagonal.
    pub fn cell_triangles(&self, cx: usize, cy: usize) -> [[Vec3; 3]; 2] {
        let p00 = self.vertex(cx, cy);
        let p10 = self.vertex(cx + 1, cy);
        let p01 = self.vertex(cx, cy + 1);
        let p11 = self.vertex(cx + 1, cy + 1);
        [[p00, p10, p11], [p00, p11, p01]]
    }

    /// Surface height at (x, y), evaluated on the triangulated cells so it
    /// agrees exactly with ray casting. Outside the field, the nearest edge
    /// cell's plane extends.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let p = self.pitch();
        let fx = ((x - self.origin.x) / p).clamp(0.0, self.resolution as f64);
        let fy = ((y - self.origin.y) / p).clamp(0.0, self.resolution as f64);
        let cx = (fx.floor() as usize).min(self.resolution - 1);
        let cy = (fy.floor() as usize).min(self.resolution - 1);
        let lx = fx - cx as f64;
        let ly = fy - cy as f64;
        let z00 = self.vertex_height(cx, cy);
        let z10 = self.vertex_height(cx + 1, cy);
        let z01 = self.vertex_height(cx, cy + 1);
        let z11 = self.vertex_height(cx + 1, cy + 1);
        if ly <= lx {
            z00 + lx * (z10 - z00) + ly * (z11 - z10)
        } else {
            z00 + lx * (z11 - z01) + ly * (z01 - z00)
        }
    }
}

/// Generate terrain with the default parameters.
pub fn gen_terrain(seed: u64, size: f64, resolution: usize) -> Terrain {
    gen_terrain_with(seed, size, resolution, &TerrainParams::default())
}

/// Deterministic per seed: three octaves of value noise at wavelengths
/// size/4, size/8 and size/16 with amplitudes a, a/2, a/4, minus crater
/// depressions.
pub fn gen_terrain_with(seed: u64, size: f64, resolution: usize, params: &TerrainParams) -> Terrain {
    assert!(resolution >= 2, "terrain needs at least 2 cells per side");
    assert!(size > 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc8a7e8);
    let count = rng.gen_range(params.crater_count.0..=params.crater_count.1);
    let craters: Vec<Crater> = (0..count)
        .map(|_| Crater {
            center: (rng.gen_range(0.0..size), rng.gen_range(0.0..size)),
            radius: rng.gen_range(params.crater_radius.0..=params.crater_radius.1),
            depth: rng.gen_range(params.crater_depth.0..=params.crater_depth.1),
        })
        .collect();

    let verts = resolution + 1;
    let pitch = size / resolution as f64;
    let base_wavelength = size / 4.0;
    let mut heights = Vec::with_capacity(verts * verts);
    for iy in 0..verts {
        for ix in 0..verts {
            let x = ix as f64 * pitch;
            let y = iy as f64 * pitch;
            let mut h = 0.0;
            for octave in 0..3u32 {
                let wavelength = base_wavelength / (1 << octave) as f64;
                let amp = params.amplitude / (1 << octave) as f64;
                h += amp * value_noise_2d(seed, octave, x / wavelength, y / wavelength);
            }
            let dent = craters
                .iter()
                .map(|c| c.depression(x, y))
                .fold(0.0, f64::max);
            heights.push(h - dent);
        }
    }

    let friction = (0..resolution * resolution)
        .map(|_| rng.gen_range(0.5..1.0))
        .collect();

    let mut cell_bounds = Vec::with_capacity(resolution * resolution);
    for cy in 0..resolution {
        for cx in 0..resolution {
            let zs = [
                heights[cy * verts + cx],
                heights[cy * verts + cx + 1],
                heights[(cy + 1) * verts + cx],
                heights[(cy + 1) * verts + cx + 1],
            ];
            let lo = zs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            cell_bounds.push((lo, hi));
        }
    }
    let min_height = heights.iter().copied().fold(f64::INFINITY, f64::min);
    let max_height = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    Terrain {
        heights,
        resolution,
        size,
        origin: Vec3::new(-size / 2.0, -size / 2.0, 0.0),
        friction,
        craters,
        cell_bounds,
        min_height,
        max_height,
    }
}

/// Parameters that produce an exactly flat plane at z = 0.
pub fn flat_params() -> TerrainParams {
    TerrainParams {
        amplitude: 0.0,
        crater_depth: (0.0, 0.0),
        ..TerrainParams::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = gen_terrain(99, 0.8, 32);
        let b = gen_terrain(99, 0.8, 32);
        assert_eq!(a, b);
        let c = gen_terrain(100, 0.8, 32);
        assert_ne!(a.heights, c.heights);
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let t = gen_terrain_with(5, 0.8, 16, &flat_params());
        assert!(t.heights.iter().all(|&h| h == 0.0));
        assert_eq!(t.height_at(0.123, -0.27), 0.0);
    }

    #[test]
    fn hundred_seeds_bounded_and_craters_in_bounds() {
        for seed in 0..100 {
            let t = gen_terrain(seed, 0.8, 32);
            for &h in &t.heights {
                assert!(h.abs() <= 0.10, "seed {seed}: height {h}");
            }
            assert!(!t.craters.is_empty() && t.craters.len() <= 3);
            for c in &t.craters {
                assert!((0.0..=t.size).contains(&c.center.0));
                assert!((0.0..=t.size).contains(&c.center.1));
                assert!((0.05..=0.15).contains(&c.radius));
                assert!(c.depth <= 0.03);
            }
        }
    }

    #[test]
    fn height_at_matches_vertices_and_triangle_planes() {
        let t = gen_terrain(7, 0.8, 16);
        for iy in 0..=16 {
            for ix in 0..=16 {
                let v = t.vertex(ix, iy);
                // Corner vertices sit on shared cell boundaries; the
                // interpolant must reproduce them exactly.
                assert!((t.height_at(v.x, v.y) - v.z).abs() < 1e-12);
            }
        }
        // Interior of a cell: barycentric interpolation on the triangle.
        let tris = t.cell_triangles(3, 5);
        for tri in tris {
            let c = (tri[0] + tri[1] + tri[2]) * (1.0 / 3.0);
            assert!((t.height_at(c.x, c.y) - c.z).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_triangles_face_up() {
        let t = gen_terrain(13, 0.8, 16);
        for cy in 0..16 {
            for cx in 0..16 {
                for tri in t.cell_triangles(cx, cy) {
                    let n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
                    assert!(n.z > 0.0);
                }
            }
        }
    }
}
