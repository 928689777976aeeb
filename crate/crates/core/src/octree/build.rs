use std::collections::HashMap;

use crate::geometry::{PointCloud, Vec3};

use super::{
    morton_decode, morton_encode, quantize, LeafFeatures, Octree, OctreeError, LEAF_CHANNELS,
    MAX_DEPTH,
};

/// Running sums for one leaf; accumulated in f64, in point order.
#[derive(Default, Clone)]
struct Accum {
    n: Vec3,
    dist: f64,
    intensity: f64,
    count: u32,
}

impl Accum {
    fn finish(&self, half_diagonal: f64) -> LeafFeatures {
        let inv = 1.0 / self.count as f64;
        let mean_n = self.n * inv;
        let unit = mean_n.normalized().unwrap_or(Vec3::ZERO);
        LeafFeatures {
            nx: unit.x as f32,
            ny: unit.y as f32,
            nz: unit.z as f32,
            dbar: ((self.dist * inv / half_diagonal).clamp(0.0, 1.0)) as f32,
            ibar: (self.intensity * inv).clamp(0.0, 1.0) as f32,
        }
    }
}

/// Bin a cropped cloud into the finest cells of the cubic volume.
///
/// Points on an internal cell boundary fall in the higher-index cell, the
/// same convention as the half-open crop. Points outside the volume are
/// skipped (the caller crops first). An empty cloud yields an empty octree.
pub fn build_octree(
    pc: &PointCloud,
    normals: &[Vec3],
    center: Vec3,
    extent: f64,
    d_max: u8,
) -> Result<Octree, OctreeError> {
    if d_max == 0 || d_max > MAX_DEPTH {
        return Err(OctreeError::InvalidDepth {
            requested: d_max,
            max: MAX_DEPTH,
        });
    }
    if pc.points.len() != normals.len() {
        return Err(OctreeError::LengthMismatch {
            points: pc.points.len(),
            normals: normals.len(),
        });
    }
    let center = quantize(center);
    let extent = extent as f32 as f64;
    let dim = 1u32 << d_max;
    let leaf = extent / dim as f64;
    let half = extent / 2.0;
    let min = center - Vec3::new(half, half, half);
    let half_diagonal = 3f64.sqrt() / 2.0 * leaf;

    let mut accums: HashMap<u32, Accum> = HashMap::new();
    for (p, n) in pc.points.iter().zip(normals) {
        let fx = (p.position.x - min.x) / leaf;
        let fy = (p.position.y - min.y) / leaf;
        let fz = (p.position.z - min.z) / leaf;
        if fx < 0.0 || fy < 0.0 || fz < 0.0 {
            continue;
        }
        let (ix, iy, iz) = (fx.floor() as u32, fy.floor() as u32, fz.floor() as u32);
        if ix >= dim || iy >= dim || iz >= dim {
            continue;
        }
        let code = morton_encode(ix, iy, iz, d_max);
        let cell_center = min
            + Vec3::new(
                (ix as f64 + 0.5) * leaf,
                (iy as f64 + 0.5) * leaf,
                (iz as f64 + 0.5) * leaf,
            );
        let a = accums.entry(code).or_default();
        a.n = a.n + *n;
        a.dist += (p.position - cell_center).norm();
        a.intensity += p.intensity as f64;
        a.count += 1;
    }

    let mut leaf_codes: Vec<u32> = accums.keys().copied().collect();
    leaf_codes.sort_unstable();
    let features = leaf_codes
        .iter()
        .map(|c| accums[c].finish(half_diagonal))
        .collect();
    Octree::from_parts(d_max, center, extent, leaf_codes, features)
}

/// Dense voxelization of an octree at a given depth.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    /// Cells per axis, 2^depth.
    pub dim: usize,
    /// Row-major with x fastest: `data[((iz*dim + iy)*dim + ix)*C + c]`.
    pub data: Vec<f32>,
}

impl VoxelGrid {
    pub fn zeros(dim: usize) -> Self {
        VoxelGrid {
            dim,
            data: vec![0.0; dim * dim * dim * LEAF_CHANNELS],
        }
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> [f32; LEAF_CHANNELS] {
        let at = ((iz * self.dim + iy) * self.dim + ix) * LEAF_CHANNELS;
        let mut out = [0.0; LEAF_CHANNELS];
        out.copy_from_slice(&self.data[at..at + LEAF_CHANNELS]);
        out
    }

    fn set(&mut self, ix: usize, iy: usize, iz: usize, v: [f32; LEAF_CHANNELS]) {
        let at = ((iz * self.dim + iy) * self.dim + ix) * LEAF_CHANNELS;
        self.data[at..at + LEAF_CHANNELS].copy_from_slice(&v);
    }
}

/// Expand the octree into a dense grid at `depth`. Cells above the finest
/// level hold the arithmetic mean of the features of their occupied
/// descendant leaves; empty cells are all-zero. At `d_max` this inverts the
/// sparse representation exactly.
pub fn voxelize(o: &Octree, depth: u8) -> Result<VoxelGrid, OctreeError> {
    if depth == 0 || depth > o.d_max() {
        return Err(OctreeError::InvalidDepth {
            requested: depth,
            max: o.d_max(),
        });
    }
    let dim = 1usize << depth;
    let mut grid = VoxelGrid::zeros(dim);
    let shift = 3 * (o.d_max() - depth) as u32;
    let codes = o.leaf_codes();
    let feats = o.features();
    let mut at = 0;
    while at < codes.len() {
        let cell = codes[at] >> shift;
        let mut sum = [0f64; LEAF_CHANNELS];
        let mut count = 0u32;
        while at < codes.len() && codes[at] >> shift == cell {
            for (s, f) in sum.iter_mut().zip(feats[at].as_array()) {
                *s += f as f64;
            }
            count += 1;
            at += 1;
        }
        let mean = sum.map(|s| (s / count as f64) as f32);
        let (ix, iy, iz) = morton_decode(cell, depth);
        grid.set(ix as usize, iy as usize, iz as usize, mean);
    }
    Ok(grid)
}
