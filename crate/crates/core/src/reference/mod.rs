//! Slow, obviously-correct reference implementations.
//!
//! Everything here exists to cross-check the optimized production paths:
//! brute-force searches, dense-array re-derivations of sparse algorithms,
//! and finite-difference gradient checks. Test code and benchmarks call
//! into this module; production paths never do.

use crate::geometry::{PointCloud, Vec3};
use crate::scene::TriMesh;

/// Convexity of a closed, outward-wound triangle mesh: every vertex must
/// lie on or behind the plane of every face.
pub fn mesh_is_convex(mesh: &TriMesh) -> bool {
    let scale = mesh
        .vertices
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    let eps = 1e-9 * scale.max(1e-12);
    for i in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(i);
        let n = (b - a).cross(c - a);
        for v in &mesh.vertices {
            if (*v - a).dot(n) > eps * n.norm() {
                return false;
            }
        }
    }
    true
}

/// k nearest neighbors of `q` by exhaustive scan, ties broken by index,
/// result sorted ascending by index.
pub fn brute_force_knn(points: &[Vec3], q: Vec3, k: usize) -> Vec<u32> {
    let mut all: Vec<(f64, u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((*p - q).norm_sq(), i as u32))
        .collect();
    all.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(k);
    let mut idx: Vec<u32> = all.into_iter().map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// Normal estimation with brute-force neighbor search; mirrors the
/// production accumulation order so outputs can be compared exactly.
pub fn normals_brute_force(points: &[Vec3], k: usize, viewpoint: Vec3) -> Vec<Vec3> {
    points
        .iter()
        .map(|&p| {
            let ids = brute_force_knn(points, p, k);
            let neighborhood: Vec<Vec3> = ids.iter().map(|&i| points[i as usize]).collect();
            let mut n = crate::geometry::normals::pca_normal(&neighborhood);
            if n.dot(viewpoint - p) < 0.0 {
                n = -n;
            }
            n
        })
        .collect()
}

/// Dense per-cell binning over the full 2^d grid. Volume descriptors are
/// used as given; tests pass f32-exact values so this matches the octree's
/// quantized volume.
pub struct DenseBins {
    dim: u32,
    cells: Vec<Option<[f32; 5]>>,
}

impl DenseBins {
    /// Mean features of the cell, or None when no point fell in it.
    pub fn get(&self, ix: u32, iy: u32, iz: u32) -> Option<[f32; 5]> {
        self.cells[((iz * self.dim + iy) * self.dim + ix) as usize]
    }
}

pub fn dense_binning(
    pc: &PointCloud,
    normals: &[Vec3],
    center: Vec3,
    extent: f64,
    depth: u8,
) -> DenseBins {
    assert_eq!(pc.points.len(), normals.len());
    let dim = 1u32 << depth;
    let leaf = extent / dim as f64;
    let half = extent / 2.0;
    let min = center - Vec3::new(half, half, half);
    let half_diagonal = 3f64.sqrt() / 2.0 * leaf;

    #[derive(Clone, Default)]
    struct Acc {
        n: Vec3,
        dist: f64,
        intensity: f64,
        count: u32,
    }
    let mut acc = vec![Acc::default(); (dim * dim * dim) as usize];
    for (p, n) in pc.points.iter().zip(normals) {
        let fx = ((p.position.x - min.x) / leaf).floor();
        let fy = ((p.position.y - min.y) / leaf).floor();
        let fz = ((p.position.z - min.z) / leaf).floor();
        if fx < 0.0 || fy < 0.0 || fz < 0.0 {
            continue;
        }
        let (ix, iy, iz) = (fx as u32, fy as u32, fz as u32);
        if ix >= dim || iy >= dim || iz >= dim {
            continue;
        }
        let cell_center = min
            + Vec3::new(
                (ix as f64 + 0.5) * leaf,
                (iy as f64 + 0.5) * leaf,
                (iz as f64 + 0.5) * leaf,
            );
        let a = &mut acc[((iz * dim + iy) * dim + ix) as usize];
        a.n = a.n + *n;
        a.dist += (p.position - cell_center).norm();
        a.intensity += p.intensity as f64;
        a.count += 1;
    }
    let cells = acc
        .into_iter()
        .map(|a| {
            if a.count == 0 {
                return None;
            }
            let inv = 1.0 / a.count as f64;
            let mean_n = a.n * inv;
            let unit = mean_n.normalized().unwrap_or(Vec3::ZERO);
            Some([
                unit.x as f32,
                unit.y as f32,
                unit.z as f32,
                ((a.dist * inv / half_diagonal).clamp(0.0, 1.0)) as f32,
                ((a.intensity * inv).clamp(0.0, 1.0)) as f32,
            ])
        })
        .collect();
    DenseBins { dim, cells }
}

/// A brute-force ray intersection: parameter along the ray and what was hit.
#[derive(Debug, Clone, Copy)]
pub struct BruteHit {
    pub t: f64,
    pub object: crate::scene::HitObject,
}

/// Ray-triangle intersection by Cramer's rule on the barycentric system,
/// deliberately a different formulation than the production caster.
fn tri_intersect(orig: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    use crate::geometry::Mat3;
    let e1 = b - a;
    let e2 = c - a;
    let det = Mat3::from_cols(e1, e2, -dir).det();
    if det.abs() < 1e-18 {
        return None;
    }
    let rhs = orig - a;
    let u = Mat3::from_cols(rhs, e2, -dir).det() / det;
    let v = Mat3::from_cols(e1, rhs, -dir).det() / det;
    let t = Mat3::from_cols(e1, e2, rhs).det() / det;
    (u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 1e-9).then_some(t)
}

/// Nearest scene intersection by fine marching over the heightfield and
/// exhaustive triangle tests on every rock, with no acceleration structure.
pub fn raycast_brute_force(
    scene: &crate::scene::Scene,
    orig: Vec3,
    dir: Vec3,
) -> Option<BruteHit> {
    use crate::scene::HitObject;

    let mut best: Option<BruteHit> = None;

    // Terrain: march until the ray crosses the surface, then bisect. The
    // march spans the terrain's bounding box with margin.
    let terr = &scene.terrain;
    let dir_len = dir.norm();
    if dir_len > 0.0 {
        let span = terr.size * 2.0 + (orig - Vec3::ZERO).norm() + 1.0;
        let t_end = span / dir_len;
        let step = terr.pitch() / 8.0 / dir_len;
        let above = |t: f64| {
            let p = orig + dir * t;
            p.z - terr.height_at(p.x, p.y)
        };
        // Any sign change brackets a crossing; entering from below happens
        // when the ray dipped under the extended edge plane outside the
        // footprint. Crossings outside the footprint are skipped, since the
        // field only exists there as a clamped extension.
        let mut t_prev = 0.0;
        let mut f_prev = above(0.0);
        let mut t = step;
        while t <= t_end {
            let f = above(t);
            if (f_prev > 0.0) != (f > 0.0) {
                let sign_lo = f_prev > 0.0;
                let (mut lo, mut hi) = (t_prev, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (above(mid) > 0.0) == sign_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let tc = 0.5 * (lo + hi);
                let p = orig + dir * tc;
                if p.x >= terr.origin.x
                    && p.x <= terr.origin.x + terr.size
                    && p.y >= terr.origin.y
                    && p.y <= terr.origin.y + terr.size
                {
                    best = Some(BruteHit {
                        t: tc,
                        object: HitObject::Terrain,
                    });
                    break;
                }
            }
            f_prev = f;
            t_prev = t;
            t += step;
        }
    }

    for (i, rock) in scene.rocks.iter().enumerate() {
        let verts = rock.world_verts();
        for tri in &rock.mesh.collision.triangles {
            let (a, b, c) = (
                verts[tri[0] as usize],
                verts[tri[1] as usize],
                verts[tri[2] as usize],
            );
            if let Some(t) = tri_intersect(orig, dir, a, b, c) {
                if best.map_or(true, |bh| t < bh.t) {
                    best = Some(BruteHit {
                        t,
                        object: HitObject::Rock(i),
                    });
                }
            }
        }
    }
    best
}

/// Relative error with a floor: tiny gradients are compared absolutely
/// against 1e-4 (finite differences through f32 forward passes carry noise
/// of that order).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(0.01)
}

/// Central-difference check driver. `targets` lists (tensor id, element,
/// analytic gradient); `perturbed_loss(t, j, delta)` must add `delta` to that
/// element, evaluate the scalar loss, and restore the element. Returns the
/// worst [`rel_err`] between analytic and numeric gradients.
pub fn fd_max_rel_err(
    targets: &[(usize, usize, f64)],
    eps: f64,
    mut perturbed_loss: impl FnMut(usize, usize, f64) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for &(t, j, analytic) in targets {
        let lp = perturbed_loss(t, j, eps);
        let lm = perturbed_loss(t, j, -eps);
        let numeric = (lp - lm) / (2.0 * eps);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

/// Outcome of one curvature-gated central-difference probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdProbe {
    /// The probe interval was kink-free; carries the [`rel_err`] between the
    /// numeric slope and the analytic gradient.
    Valid(f64),
    /// A nonlinearity boundary (or the noise floor) sits inside the probe
    /// interval; the central difference estimates no slope there.
    Void,
}

/// Central-difference probe for losses that are piecewise linear in the
/// probed element (relu / max-pool networks). Off a kink the second
/// difference `l_plus + l_minus - 2*l_base` is exactly zero, and one kink
/// inside the interval shifts the central difference by exactly that second
/// difference over `2*eps`. The probe is void when the implied shift could
/// eat a quarter of `tol`; `curvature_floor` absorbs rounding noise in the
/// three loss evaluations (1e-9 suffices for f64 oracle forwards).
pub fn fd_linear_probe(
    l_base: f64,
    l_plus: f64,
    l_minus: f64,
    eps: f64,
    analytic: f64,
    tol: f64,
    curvature_floor: f64,
) -> FdProbe {
    let fd = (l_plus - l_minus) / (2.0 * eps);
    let denom = fd.abs().max(analytic.abs()).max(0.01);
    let curvature = (l_plus + l_minus - 2.0 * l_base).abs();
    if curvature > (0.25 * tol * denom * 2.0 * eps).max(curvature_floor) {
        return FdProbe::Void;
    }
    FdProbe::Valid(rel_err(fd, analytic))
}

/// FD probe targets: up to `per_tensor` elements per parameter tensor whose
/// gradients sit near that tensor's peak magnitude.
pub fn fd_pick_targets<R: rand::Rng>(
    params: &[&crate::nets::Tensor],
    per_tensor: usize,
    rng: &mut R,
) -> Vec<(usize, usize, f64)> {
    let mut targets = Vec::new();
    for (t, p) in params.iter().enumerate() {
        let grads = p.grad().expect("backward must run before fd_pick_targets");
        let peak = grads.iter().fold(0.0f32, |m, g| m.max(g.abs()));
        let mut picked = 0;
        for _ in 0..600 {
            if picked >= per_tensor {
                break;
            }
            let j = rng.gen_range(0..p.len());
            if grads[j].abs() > 0.3 * peak {
                targets.push((t, j, grads[j] as f64));
                picked += 1;
            }
        }
    }
    targets
}

/// Curvature-gated central-difference sweep over `targets`. Perturbs each
/// element through `read`/`write` (exact restore), evaluates `loss`, and
/// gates on kinks via [`fd_linear_probe`]. Returns (worst valid rel err,
/// valid probe count).
pub fn fd_probe_params<E>(
    ex: &mut E,
    targets: &[(usize, usize, f64)],
    eps: f64,
    tol: f64,
    curvature_floor: f64,
    read: impl Fn(&mut E, usize, usize) -> f32,
    write: impl Fn(&mut E, usize, usize, f32),
    loss: impl Fn(&E) -> f64,
) -> (f64, usize) {
    let base = loss(ex);
    let mut worst = 0.0f64;
    let mut valid = 0;
    for &(t, j, analytic) in targets {
        let orig = read(ex, t, j);
        write(ex, t, j, (orig as f64 + eps) as f32);
        let plus = loss(ex);
        write(ex, t, j, (orig as f64 - eps) as f32);
        let minus = loss(ex);
        write(ex, t, j, orig);
        if std::env::var_os("FD_DEBUG").is_some() {
            let fd = (plus - minus) / (2.0 * eps);
            let curv = (plus + minus - 2.0 * base).abs();
            eprintln!("probe t={t} j={j} g={analytic:+.5e} fd={fd:+.5e} curv={curv:.3e}");
        }
        match fd_linear_probe(base, plus, minus, eps, analytic, tol, curvature_floor) {
            FdProbe::Valid(err) => {
                worst = worst.max(err);
                valid += 1;
            }
            FdProbe::Void => {}
        }
    }
    (worst, valid)
}

/// Dense 3x3x3 convolution over a full `dim^3` grid laid out as
/// `((iz*dim + iy)*dim + ix)*c + ci`, weights `[c_out, 3, 3, 3, c_in]`,
/// stride 1, zero padding. Accumulation order matches the sparse path:
/// bias, then taps in (kz, ky, kx) order, products over ci ascending.
pub fn dense_conv3d(
    input: &[f32],
    dim: usize,
    c_in: usize,
    w: &[f32],
    b: &[f32],
    c_out: usize,
) -> Vec<f32> {
    assert_eq!(input.len(), dim * dim * dim * c_in);
    assert_eq!(w.len(), c_out * 27 * c_in);
    let mut out = vec![0.0f32; dim * dim * dim * c_out];
    for iz in 0..dim {
        for iy in 0..dim {
            for ix in 0..dim {
                for co in 0..c_out {
                    let mut acc = b[co];
                    for kz in 0..3_isize {
                        let nz = iz as isize + kz - 1;
                        if nz < 0 || nz >= dim as isize {
                            continue;
                        }
                        for ky in 0..3_isize {
                            let ny = iy as isize + ky - 1;
                            if ny < 0 || ny >= dim as isize {
                                continue;
                            }
                            for kx in 0..3_isize {
                                let nx = ix as isize + kx - 1;
                                if nx < 0 || nx >= dim as isize {
                                    continue;
                                }
                                let xat = (((nz as usize * dim) + ny as usize) * dim
                                    + nx as usize)
                                    * c_in;
                                let wat = ((((co * 3 + kz as usize) * 3 + ky as usize) * 3)
                                    + kx as usize)
                                    * c_in;
                                for ci in 0..c_in {
                                    acc += w[wat + ci] * input[xat + ci];
                                }
                            }
                        }
                    }
                    out[((iz * dim + iy) * dim + ix) * c_out + co] = acc;
                }
            }
        }
    }
    out
}

/// Zero a dense grid everywhere except the listed occupied cells.
pub fn mask_grid(grid: &mut [f32], dim: usize, c: usize, occupied: &[(usize, usize, usize)]) {
    let mut keep = vec![false; dim * dim * dim];
    for &(ix, iy, iz) in occupied {
        keep[(iz * dim + iy) * dim + ix] = true;
    }
    for (cell, k) in keep.iter().enumerate() {
        if !k {
            grid[cell * c..(cell + 1) * c].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Dense 2x2x2 max pooling; empty cells hold 0 and participate in the max.
pub fn dense_pool3d(input: &[f32], dim: usize, c: usize) -> Vec<f32> {
    assert_eq!(input.len(), dim * dim * dim * c);
    assert_eq!(dim % 2, 0);
    let od = dim / 2;
    let mut out = vec![0.0f32; od * od * od * c];
    for oz in 0..od {
        for oy in 0..od {
            for ox in 0..od {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let at = (((oz * 2 + dz) * dim + oy * 2 + dy) * dim
                                    + ox * 2
                                    + dx)
                                    * c
                                    + ch;
                                best = best.max(input[at]);
                            }
                        }
                    }
                    out[((oz * od + oy) * od + ox) * c + ch] = best;
                }
            }
        }
    }
    out
}

/// Random depth-4 octree over the standard 40 cm observation volume:
/// random occupied leaf set, features uniform in [-1, 1].
pub fn random_octree<R: rand::Rng>(rng: &mut R, max_leaves: usize) -> crate::octree::Octree {
    use crate::octree::{LeafFeatures, Octree};
    let n = rng.gen_range(1..=max_leaves.max(1));
    let mut codes: Vec<u32> = (0..n).map(|_| rng.gen_range(0..1u32 << 12)).collect();
    codes.sort_unstable();
    codes.dedup();
    let features = codes
        .iter()
        .map(|_| {
            LeafFeatures::from_array([
                rng.gen_range(-1.0f32..1.0),
                rng.gen_range(-1.0f32..1.0),
                rng.gen_range(-1.0f32..1.0),
                rng.gen_range(0.0f32..1.0),
                rng.gen_range(0.0f32..1.0),
            ])
        })
        .collect();
    Octree::from_parts(4, Vec3::new(0.0, 0.0, 0.1), 0.4, codes, features).unwrap()
}

/// f64 mirror of the sparse 3D convolution on a dense `dim^3` grid, same
/// layout and tap order as [`dense_conv3d`]. Weights stay f32 and widen per
/// multiply, so the linear map matches the production parameters exactly.
pub fn conv3d_f64(
    input: &[f64],
    dim: usize,
    c_in: usize,
    w: &[f32],
    b: &[f32],
    c_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0f64; dim * dim * dim * c_out];
    for iz in 0..dim {
        for iy in 0..dim {
            for ix in 0..dim {
                for co in 0..c_out {
                    let mut acc = b[co] as f64;
                    for kz in 0..3usize {
                        let nz = iz as isize + kz as isize - 1;
                        if nz < 0 || nz as usize >= dim {
                            continue;
                        }
                        for ky in 0..3usize {
                            let ny = iy as isize + ky as isize - 1;
                            if ny < 0 || ny as usize >= dim {
                                continue;
                            }
                            for kx in 0..3usize {
                                let nx = ix as isize + kx as isize - 1;
                                if nx < 0 || nx as usize >= dim {
                                    continue;
                                }
                                let xat =
                                    ((nz as usize * dim + ny as usize) * dim + nx as usize) * c_in;
                                let tap = (kz * 3 + ky) * 3 + kx;
                                let wat = (co * 27 + tap) * c_in;
                                for ci in 0..c_in {
                                    acc += w[wat + ci] as f64 * input[xat + ci];
                                }
                            }
                        }
                    }
                    out[((iz * dim + iy) * dim + ix) * c_out + co] = acc;
                }
            }
        }
    }
    out
}

/// f64 mirror of [`dense_pool3d`]: 2x2x2 max with stride 2.
pub fn pool3d_f64(input: &[f64], dim: usize, c: usize) -> Vec<f64> {
    let od = dim / 2;
    let mut out = vec![0.0f64; od * od * od * c];
    for oz in 0..od {
        for oy in 0..od {
            for ox in 0..od {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let at = (((oz * 2 + dz) * dim + oy * 2 + dy) * dim
                                    + ox * 2
                                    + dx)
                                    * c
                                    + ch;
                                best = best.max(input[at]);
                            }
                        }
                    }
                    out[((oz * od + oy) * od + ox) * c + ch] = best;
                }
            }
        }
    }
    out
}

/// Zero every cell of a dense `dim^3` grid whose depth-`depth` morton code
/// is absent from `codes` (emulates sparse evaluation at occupied cells).
pub fn mask_codes_f64(grid: &mut [f64], dim: usize, c: usize, codes: &[u32], depth: u8) {
    let mut keep = vec![false; dim * dim * dim];
    for &code in codes {
        let (x, y, z) = crate::octree::morton_decode(code, depth);
        keep[(z as usize * dim + y as usize) * dim + x as usize] = true;
    }
    for (cell, k) in keep.iter().enumerate() {
        if !k {
            for ch in 0..c {
                grid[cell * c + ch] = 0.0;
            }
        }
    }
}

/// f64 mirror of the 3x3 image convolution (stride 1, zero padding) on an
/// `[h, w, c_in]` grid, production weight layout `[c_out, 3, 3, c_in]`.
pub fn conv2d_f64(
    input: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    wq: &[f32],
    b: &[f32],
    c_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0f64; h * w * c_out];
    for iy in 0..h {
        for ix in 0..w {
            for co in 0..c_out {
                let mut acc = b[co] as f64;
                for ky in 0..3usize {
                    let ny = iy as isize + ky as isize - 1;
                    if ny < 0 || ny as usize >= h {
                        continue;
                    }
                    for kx in 0..3usize {
                        let nx = ix as isize + kx as isize - 1;
                        if nx < 0 || nx as usize >= w {
                            continue;
                        }
                        let xat = (ny as usize * w + nx as usize) * c_in;
                        let wat = ((co * 3 + ky) * 3 + kx) * c_in;
                        for ci in 0..c_in {
                            acc += wq[wat + ci] as f64 * input[xat + ci];
                        }
                    }
                }
                out[(iy * w + ix) * c_out + co] = acc;
            }
        }
    }
    out
}

/// f64 2x2 max pooling with stride 2 on `[h, w, c]`.
pub fn pool2d_f64(input: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f64; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        best = best.max(input[((oy * 2 + dy) * w + ox * 2 + dx) * c + ch]);
                    }
                }
                out[(oy * ow + ox) * c + ch] = best;
            }
        }
    }
    out
}

fn relu_f64(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn dense_relu_f64(x: &[f64], w: &[f32], b: &[f32]) -> Vec<f64> {
    let out_dim = b.len();
    let in_dim = w.len() / out_dim;
    assert_eq!(x.len(), in_dim);
    (0..out_dim)
        .map(|o| {
            let mut acc = b[o] as f64;
            for (i, &xi) in x.iter().enumerate() {
                acc += w[o * in_dim + i] as f64 * xi;
            }
            acc.max(0.0)
        })
        .collect()
}

/// f64 mirror of the octree extractor's visual path: dense conv field masked
/// to each level's occupancy, relu, 2x pooling, then the fully connected
/// reduction. FD oracles evaluate this instead of the f32 production path
/// so the kink-detecting curvature gate sees no rounding noise.
pub fn octree_visual_f64(
    o: &crate::octree::Octree,
    w1: &[f32],
    b1: &[f32],
    w2: &[f32],
    b2: &[f32],
    wf: &[f32],
    bf: &[f32],
) -> Vec<f64> {
    let mut g = vec![0.0f64; 16 * 16 * 16 * 5];
    for (i, &code) in o.leaf_codes().iter().enumerate() {
        let (x, y, z) = crate::octree::morton_decode(code, 4);
        let f = o.features()[i].as_array();
        let at = ((z as usize * 16 + y as usize) * 16 + x as usize) * 5;
        for (c, &v) in f.iter().enumerate() {
            g[at + c] = v as f64;
        }
    }
    let mut h = conv3d_f64(&g, 16, 5, w1, b1, 16);
    mask_codes_f64(&mut h, 16, 16, o.leaf_codes(), 4);
    relu_f64(&mut h);
    let mut h = pool3d_f64(&h, 16, 16);
    let mut h2 = conv3d_f64(&h, 8, 16, w2, b2, 32);
    mask_codes_f64(&mut h2, 8, 32, &o.occupied_cells(3), 3);
    relu_f64(&mut h2);
    h = pool3d_f64(&h2, 8, 32);
    dense_relu_f64(&h, wf, bf)
}

/// f64 mirror of the image extractor's visual path, including the depth and
/// intensity normalization (performed in f32 exactly as production, then
/// widened).
pub fn image_visual_f64(
    depth: &crate::geometry::Image,
    intensity: &crate::geometry::Image,
    convs: &[(&[f32], &[f32])],
    wf: &[f32],
    bf: &[f32],
) -> Vec<f64> {
    let side = depth.width;
    let mut x = vec![0.0f64; side * side * 2];
    for v in 0..side {
        for u in 0..side {
            let d = depth.get(u, v);
            let dn: f32 = if d > 0.0 && d.is_finite() {
                d.clamp(0.0, 1.0)
            } else {
                1.0
            };
            x[(v * side + u) * 2] = dn as f64;
            x[(v * side + u) * 2 + 1] = intensity.get(u, v).clamp(0.0, 1.0) as f64;
        }
    }
    let mut c_in = 2usize;
    let mut dim = side;
    for (w, b) in convs {
        let c_out = b.len();
        let mut y = conv2d_f64(&x, dim, dim, c_in, w, b, c_out);
        relu_f64(&mut y);
        x = pool2d_f64(&y, dim, dim, c_out);
        dim /= 2;
        c_in = c_out;
    }
    dense_relu_f64(&x, wf, bf)
}
