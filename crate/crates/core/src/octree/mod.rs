//! Multi-channel octree observations.
//!
//! A cropped point cloud is binned into the finest cells of a cubic volume
//! (recursive-subdivision view: only occupied cells are subdivided). Each
//! occupied leaf stores the mean unit normal, the normalized mean distance
//! of its points to the octant center, and the mean intensity.

mod build;
mod serial;

pub use build::{build_octree, voxelize, VoxelGrid};
pub use serial::{deserialize_octree, serialize_octree};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Feature channels stored per occupied leaf, in channel order
/// (nx, ny, nz, d, i).
pub const LEAF_CHANNELS: usize = 5;

#[derive(Debug, Error)]
pub enum OctreeError {
    #[error("depth {requested} out of range (1..={max})")]
    InvalidDepth { requested: u8, max: u8 },
    #[error("cloud has {points} points but {normals} normals")]
    LengthMismatch { points: usize, normals: usize },
    #[error("malformed octree data: {0}")]
    MalformedInput(&'static str),
}

/// Deepest supported subdivision; leaf Morton codes must fit in 30 bits.
pub const MAX_DEPTH: u8 = 10;

/// Per-leaf aggregate features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafFeatures {
    /// Mean unit normal, renormalized; all-zero when the mean vanishes.
    pub nx: f32,
    pub ny: f32,
    pub nz: f32,
    /// Mean distance to the octant center over the leaf half-diagonal,
    /// clamped to [0, 1].
    pub dbar: f32,
    /// Mean intensity, in [0, 1].
    pub ibar: f32,
}

impl LeafFeatures {
    pub const ZERO: LeafFeatures = LeafFeatures {
        nx: 0.0,
        ny: 0.0,
        nz: 0.0,
        dbar: 0.0,
        ibar: 0.0,
    };

    pub fn as_array(&self) -> [f32; LEAF_CHANNELS] {
        [self.nx, self.ny, self.nz, self.dbar, self.ibar]
    }

    pub fn from_array(a: [f32; LEAF_CHANNELS]) -> Self {
        LeafFeatures {
            nx: a[0],
            ny: a[1],
            nz: a[2],
            dbar: a[3],
            ibar: a[4],
        }
    }
}

/// Sparse octree over a cubic volume. Only occupied finest-level leaves are
/// stored; interior structure is implied by leaf-code prefixes. The volume
/// is quantized to f32 so that serialization round trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Octree {
    d_max: u8,
    center: Vec3,
    extent: f64,
    /// Morton codes of occupied leaves, strictly ascending.
    leaf_codes: Vec<u32>,
    /// Parallel to `leaf_codes`.
    features: Vec<LeafFeatures>,
}

impl Octree {
    /// Assemble from parts, enforcing the structural invariants.
    pub fn from_parts(
        d_max: u8,
        center: Vec3,
        extent: f64,
        leaf_codes: Vec<u32>,
        features: Vec<LeafFeatures>,
    ) -> Result<Self, OctreeError> {
        if d_max == 0 || d_max > MAX_DEPTH {
            return Err(OctreeError::InvalidDepth {
                requested: d_max,
                max: MAX_DEPTH,
            });
        }
        if !(extent > 0.0) {
            return Err(OctreeError::MalformedInput("extent must be positive"));
        }
        if leaf_codes.len() != features.len() {
            return Err(OctreeError::MalformedInput(
                "leaf code and feature counts differ",
            ));
        }
        let cells = 1u64 << (3 * d_max as u64);
        if !leaf_codes.windows(2).all(|w| w[0] < w[1])
            || leaf_codes.last().is_some_and(|&c| c as u64 >= cells)
        {
            return Err(OctreeError::MalformedInput(
                "leaf codes must be ascending and in range",
            ));
        }
        Ok(Octree {
            d_max,
            center: quantize(center),
            extent: extent as f32 as f64,
            leaf_codes,
            features,
        })
    }

    pub fn d_max(&self) -> u8 {
        self.d_max
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Edge length of a finest-level leaf.
    pub fn leaf_size(&self) -> f64 {
        self.extent / (1u64 << self.d_max) as f64
    }

    pub fn leaf_codes(&self) -> &[u32] {
        &self.leaf_codes
    }

    pub fn features(&self) -> &[LeafFeatures] {
        &self.features
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaf_codes.is_empty()
    }

    /// Codes of occupied cells at `level` (0 = root), ascending.
    /// Level `d_max` returns the leaf codes themselves.
    pub fn occupied_cells(&self, level: u8) -> Vec<u32> {
        assert!(level <= self.d_max, "level beyond octree depth");
        if level == self.d_max {
            return self.leaf_codes.clone();
        }
        let shift = 3 * (self.d_max - level) as u32;
        let mut cells: Vec<u32> = self.leaf_codes.iter().map(|&c| c >> shift).collect();
        cells.dedup();
        cells
    }

    /// Minimum corner of the volume.
    pub fn volume_min(&self) -> Vec3 {
        let h = self.extent / 2.0;
        self.center - Vec3::new(h, h, h)
    }

    /// World-space center of the leaf cell with the given code.
    pub fn leaf_center(&self, code: u32) -> Vec3 {
        let (ix, iy, iz) = morton_decode(code, self.d_max);
        let s = self.leaf_size();
        self.volume_min()
            + Vec3::new(
                (ix as f64 + 0.5) * s,
                (iy as f64 + 0.5) * s,
                (iz as f64 + 0.5) * s,
            )
    }
}

/// Round a volume descriptor through f32, the serialized precision.
pub(crate) fn quantize(v: Vec3) -> Vec3 {
    Vec3::new(v.x as f32 as f64, v.y as f32 as f64, v.z as f32 as f64)
}

/// Interleave grid coordinates into a Morton code. Child octant index at
/// each level is (x-bit | y-bit << 1 | z-bit << 2).
pub fn morton_encode(ix: u32, iy: u32, iz: u32, depth: u8) -> u32 {
    debug_assert!(depth <= MAX_DEPTH);
    let mut code = 0u32;
    for l in 0..depth as u32 {
        let child = ((ix >> l) & 1) | (((iy >> l) & 1) << 1) | (((iz >> l) & 1) << 2);
        code |= child << (3 * l);
    }
    code
}

/// Inverse of [`morton_encode`].
pub fn morton_decode(code: u32, depth: u8) -> (u32, u32, u32) {
    debug_assert!(depth <= MAX_DEPTH);
    let (mut ix, mut iy, mut iz) = (0u32, 0u32, 0u32);
    for l in 0..depth as u32 {
        let child = (code >> (3 * l)) & 7;
        ix |= (child & 1) << l;
        iy |= ((child >> 1) & 1) << l;
        iz |= ((child >> 2) & 1) << l;
    }
    (ix, iy, iz)
}
