use rand::Rng;

use crate::octree::{morton_decode, Octree, LEAF_CHANNELS};

use super::tensor::Tensor;
use super::NetError;

/// Features attached to the occupied cells of one octree level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelFeatures {
    pub depth: u8,
    pub channels: usize,
    /// Morton codes of the occupied cells, strictly ascending.
    pub codes: Vec<u32>,
    /// Row per cell: `feats[cell * channels + c]`.
    pub feats: Vec<f32>,
}

impl LevelFeatures {
    pub fn from_octree(o: &Octree) -> LevelFeatures {
        let mut feats = Vec::with_capacity(o.leaf_count() * LEAF_CHANNELS);
        for f in o.features() {
            feats.extend_from_slice(&f.as_array());
        }
        LevelFeatures {
            depth: o.d_max(),
            channels: LEAF_CHANNELS,
            codes: o.leaf_codes().to_vec(),
            feats,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.codes.len()
    }

    fn like(&self, channels: usize) -> LevelFeatures {
        LevelFeatures {
            depth: self.depth,
            channels,
            codes: self.codes.clone(),
            feats: vec![0.0; self.codes.len() * channels],
        }
    }
}

/// Dense cell-index lookup for one level: `map[(z*dim + y)*dim + x]` is the
/// cell's row index, or -1 where the level is unoccupied.
fn index_map(lf: &LevelFeatures) -> Vec<i32> {
    let dim = 1usize << lf.depth;
    let mut map = vec![-1i32; dim * dim * dim];
    for (i, &code) in lf.codes.iter().enumerate() {
        let (x, y, z) = morton_decode(code, lf.depth);
        map[((z as usize * dim) + y as usize) * dim + x as usize] = i as i32;
    }
    map
}

/// 3x3x3 convolution evaluated only at occupied octants; absent neighbors
/// contribute zeros. Weights are `[c_out, 3, 3, 3, c_in]`. Per output
/// element the accumulation order is: bias, then taps in (kz, ky, kx)
/// order, products over ci ascending (the dense oracle mirrors this).
#[derive(Debug, Clone)]
pub struct SparseConv3d {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
pub struct SparseConv3dCtx {
    input: LevelFeatures,
    map: Vec<i32>,
}

impl SparseConv3d {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> SparseConv3d {
        let bound = 1.0 / ((27 * c_in) as f64).sqrt();
        SparseConv3d {
            w: Tensor::uniform(&[c_out, 3, 3, 3, c_in], bound, rng),
            b: Tensor::uniform(&[c_out], bound, rng),
        }
    }

    pub fn c_in(&self) -> usize {
        self.w.shape()[4]
    }

    pub fn c_out(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Neighbor row indices for the 27 taps around a cell, -1 where absent.
    fn neighbors(map: &[i32], dim: usize, code: u32, depth: u8) -> [i32; 27] {
        let (cx, cy, cz) = morton_decode(code, depth);
        let mut out = [-1i32; 27];
        let mut at = 0;
        for kz in -1i64..=1 {
            let z = cz as i64 + kz;
            for ky in -1i64..=1 {
                let y = cy as i64 + ky;
                for kx in -1i64..=1 {
                    let x = cx as i64 + kx;
                    if x >= 0
                        && y >= 0
                        && z >= 0
                        && (x as usize) < dim
                        && (y as usize) < dim
                        && (z as usize) < dim
                    {
                        out[at] = map[((z as usize * dim) + y as usize) * dim + x as usize];
                    }
                    at += 1;
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &LevelFeatures) -> Result<(LevelFeatures, SparseConv3dCtx), NetError> {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        if x.channels != c_in {
            return Err(NetError::ShapeMismatch {
                expected: vec![x.cell_count(), c_in],
                got: vec![x.cell_count(), x.channels],
            });
        }
        let dim = 1usize << x.depth;
        let map = index_map(x);
        let mut y = x.like(c_out);
        for (i, &code) in x.codes.iter().enumerate() {
            let nbr = Self::neighbors(&map, dim, code, x.depth);
            let row = &mut y.feats[i * c_out..(i + 1) * c_out];
            for (co, out) in row.iter_mut().enumerate() {
                let mut acc = self.b.data()[co];
                for (tap, &j) in nbr.iter().enumerate() {
                    if j < 0 {
                        continue;
                    }
                    let wat = (co * 27 + tap) * c_in;
                    let xat = j as usize * c_in;
                    for ci in 0..c_in {
                        acc += self.w.data()[wat + ci] * x.feats[xat + ci];
                    }
                }
                *out = acc;
            }
        }
        Ok((
            y,
            SparseConv3dCtx {
                input: x.clone(),
                map,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, ctx: &SparseConv3dCtx, gy: &LevelFeatures) -> LevelFeatures {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let x = &ctx.input;
        assert_eq!(gy.codes, x.codes, "gradient cells must match the forward");
        assert_eq!(gy.channels, c_out, "gradient channels");
        let dim = 1usize << x.depth;
        let mut gx = x.like(c_in);
        let w = self.w.data().to_vec();
        let gw = self.w.grad_mut();
        for (i, &code) in x.codes.iter().enumerate() {
            let nbr = Self::neighbors(&ctx.map, dim, code, x.depth);
            for co in 0..c_out {
                let g = gy.feats[i * c_out + co];
                if g == 0.0 {
                    continue;
                }
                for (tap, &j) in nbr.iter().enumerate() {
                    if j < 0 {
                        continue;
                    }
                    let wat = (co * 27 + tap) * c_in;
                    let xat = j as usize * c_in;
                    for ci in 0..c_in {
                        gw[wat + ci] += g * x.feats[xat + ci];
                        gx.feats[xat + ci] += g * w[wat + ci];
                    }
                }
            }
        }
        let gb = self.b.grad_mut();
        for i in 0..x.cell_count() {
            for co in 0..c_out {
                gb[co] += gy.feats[i * c_out + co];
            }
        }
        gx
    }
}

/// Max-pool the 8 children of each occupied parent; only present children
/// participate. Ties resolve to the lowest child code.
#[derive(Debug, Clone, Copy, Default)]
pub struct OctreePool;

#[derive(Debug, Clone)]
pub struct OctreePoolCtx {
    in_depth: u8,
    in_codes: Vec<u32>,
    channels: usize,
    /// Input cell row holding the maximum, per output element.
    arg: Vec<u32>,
}

impl OctreePool {
    pub fn forward(&self, x: &LevelFeatures) -> (LevelFeatures, OctreePoolCtx) {
        assert!(x.depth >= 1, "cannot pool the root level");
        let c = x.channels;
        let mut codes = Vec::new();
        let mut feats = Vec::new();
        let mut arg = Vec::new();
        let mut at = 0;
        while at < x.codes.len() {
            let parent = x.codes[at] >> 3;
            let start = at;
            while at < x.codes.len() && x.codes[at] >> 3 == parent {
                at += 1;
            }
            codes.push(parent);
            for ch in 0..c {
                let mut best = f32::NEG_INFINITY;
                let mut best_at = 0u32;
                for i in start..at {
                    let v = x.feats[i * c + ch];
                    if v > best {
                        best = v;
                        best_at = i as u32;
                    }
                }
                feats.push(best);
                arg.push(best_at);
            }
        }
        (
            LevelFeatures {
                depth: x.depth - 1,
                channels: c,
                codes,
                feats,
            },
            OctreePoolCtx {
                in_depth: x.depth,
                in_codes: x.codes.clone(),
                channels: c,
                arg,
            },
        )
    }

    pub fn backward(&self, ctx: &OctreePoolCtx, gy: &LevelFeatures) -> LevelFeatures {
        assert_eq!(gy.channels, ctx.channels, "gradient channels");
        assert_eq!(gy.feats.len(), ctx.arg.len(), "gradient length");
        let c = ctx.channels;
        let mut gx = LevelFeatures {
            depth: ctx.in_depth,
            channels: c,
            codes: ctx.in_codes.clone(),
            feats: vec![0.0; ctx.in_codes.len() * c],
        };
        for (o, &src) in ctx.arg.iter().enumerate() {
            let ch = o % c;
            gx.feats[src as usize * c + ch] += gy.feats[o];
        }
        gx
    }
}

/// Expand level features to a dense grid in the voxel layout
/// `((iz*dim + iy)*dim + ix)*c + ch`; empty cells are zero.
pub fn voxelize_level(x: &LevelFeatures) -> Vec<f32> {
    let dim = 1usize << x.depth;
    let c = x.channels;
    let mut out = vec![0.0f32; dim * dim * dim * c];
    for (i, &code) in x.codes.iter().enumerate() {
        let (ix, iy, iz) = morton_decode(code, x.depth);
        let at = (((iz as usize * dim) + iy as usize) * dim + ix as usize) * c;
        out[at..at + c].copy_from_slice(&x.feats[i * c..(i + 1) * c]);
    }
    out
}

/// Gather a dense-grid gradient back onto the occupied cells.
pub fn voxelize_backward(x: &LevelFeatures, grad: &[f32]) -> LevelFeatures {
    let dim = 1usize << x.depth;
    let c = x.channels;
    assert_eq!(grad.len(), dim * dim * dim * c, "gradient length");
    let mut gx = x.like(c);
    for (i, &code) in x.codes.iter().enumerate() {
        let (ix, iy, iz) = morton_decode(code, x.depth);
        let at = (((iz as usize * dim) + iy as usize) * dim + ix as usize) * c;
        gx.feats[i * c..(i + 1) * c].copy_from_slice(&grad[at..at + c]);
    }
    gx
}

/// Elementwise max(0, x) on level features; returns the active mask.
pub(crate) fn relu_level(x: &LevelFeatures) -> (LevelFeatures, Vec<bool>) {
    let mut y = x.clone();
    let active = y
        .feats
        .iter_mut()
        .map(|v| {
            let on = *v > 0.0;
            if !on {
                *v = 0.0;
            }
            on
        })
        .collect();
    (y, active)
}

pub(crate) fn relu_level_backward(active: &[bool], gy: &LevelFeatures) -> LevelFeatures {
    assert_eq!(gy.feats.len(), active.len(), "gradient length");
    let mut gx = gy.clone();
    for (g, &on) in gx.feats.iter_mut().zip(active) {
        if !on {
            *g = 0.0;
        }
    }
    gx
}
