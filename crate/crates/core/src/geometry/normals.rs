use std::collections::HashMap;

use super::cloud::PointCloud;
use super::types::Vec3;
use super::GeometryError;

/// Uniform-grid point index for exact k-nearest-neighbor queries.
/// Ring expansion stops only once no unvisited cell can hold a closer
/// point, so results match brute force exactly (ties broken by index).
struct GridIndex<'a> {
    points: &'a [Vec3],
    cell: f64,
    origin: Vec3,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    max_ring: i64,
}

impl<'a> GridIndex<'a> {
    fn build(points: &'a [Vec3]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            lo.z = lo.z.min(p.z);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
            hi.z = hi.z.max(p.z);
        }
        let span = hi - lo;
        let volume = span.x.max(1e-6) * span.y.max(1e-6) * span.z.max(1e-6);
        // Aim for a handful of points per cell.
        let cell = (volume * 4.0 / points.len() as f64).cbrt().max(1e-6);
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let key = |p: Vec3| {
            (
                ((p.x - lo.x) / cell).floor() as i64,
                ((p.y - lo.y) / cell).floor() as i64,
                ((p.z - lo.z) / cell).floor() as i64,
            )
        };
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(*p)).or_default().push(i as u32);
        }
        let max_ring = [span.x, span.y, span.z]
            .iter()
            .map(|s| (s / cell).ceil() as i64 + 1)
            .max()
            .unwrap();
        GridIndex {
            points,
            cell,
            origin: lo,
            cells,
            max_ring,
        }
    }

    fn cell_of(&self, p: Vec3) -> (i64, i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.y - self.origin.y) / self.cell).floor() as i64,
            ((p.z - self.origin.z) / self.cell).floor() as i64,
        )
    }

    /// Indices of the k nearest points to `q` (the query point itself
    /// included when it is in the cloud), sorted ascending by index.
    fn knn(&self, q: Vec3, k: usize) -> Vec<u32> {
        let (cx, cy, cz) = self.cell_of(q);
        // (distance^2, index) of current candidates; kth-best tracked lazily.
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 8);
        for ring in 0..=self.max_ring {
            if best.len() >= k {
                // Any cell in ring r is at least (r-1) cells from q.
                let bound = (ring - 1).max(0) as f64 * self.cell;
                if bound * bound > best[k - 1].0 {
                    break;
                }
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &i in ids {
                            let d2 = (self.points[i as usize] - q).norm_sq();
                            best.push((d2, i));
                        }
                    }
                }
            }
            if best.len() >= k {
                best.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                best.truncate(k);
            }
        }
        best.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        best.truncate(k);
        let mut idx: Vec<u32> = best.into_iter().map(|(_, i)| i).collect();
        idx.sort_unstable();
        idx
    }
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi
/// rotations. Returns (eigenvalues, eigenvectors as columns).
pub(crate) fn symmetric_eigen_3x3(a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = a;
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-30 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Normal of a neighborhood: smallest-eigenvalue eigenvector of the
/// covariance of the given points. Accumulation follows the given order.
pub(crate) fn pca_normal(points: &[Vec3]) -> Vec3 {
    let n = points.len() as f64;
    let mut mean = Vec3::ZERO;
    for p in points {
        mean = mean + *p;
    }
    mean = mean * (1.0 / n);
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = *p - mean;
        let e = [d.x, d.y, d.z];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += e[i] * e[j];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen_3x3(cov);
    let mut min_i = 0;
    for i in 1..3 {
        if vals[i] < vals[min_i] {
            min_i = i;
        }
    }
    let n = Vec3::new(vecs[0][min_i], vecs[1][min_i], vecs[2][min_i]);
    n.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))
}

/// Per-point surface normals from k-NN PCA, oriented so each normal faces
/// the viewpoint: n . (viewpoint - p) >= 0.
pub fn estimate_normals(
    pc: &PointCloud,
    k_neighbors: usize,
    viewpoint: Vec3,
) -> Result<Vec<Vec3>, GeometryError> {
    if k_neighbors < 3 {
        return Err(GeometryError::DegenerateInput("k_neighbors must be >= 3"));
    }
    if pc.points.len() < k_neighbors {
        return Err(GeometryError::InsufficientPoints {
            needed: k_neighbors,
            got: pc.points.len(),
        });
    }
    let positions: Vec<Vec3> = pc.points.iter().map(|p| p.position).collect();
    let index = GridIndex::build(&positions);
    let mut normals = Vec::with_capacity(positions.len());
    let mut neighborhood = Vec::with_capacity(k_neighbors);
    for &p in &positions {
        let ids = index.knn(p, k_neighbors);
        neighborhood.clear();
        neighborhood.extend(ids.iter().map(|&i| positions[i as usize]));
        let mut n = pca_normal(&neighborhood);
        if n.dot(viewpoint - p) < 0.0 {
            n = -n;
        }
        normals.push(n);
    }
    Ok(normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cloud::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud_from(positions: Vec<Vec3>) -> PointCloud {
        PointCloud {
            points: positions
                .into_iter()
                .map(|position| Point {
                    position,
                    intensity: 0.5,
                })
                .collect(),
        }
    }

    #[test]
    fn plane_normals_point_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let positions: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let pc = cloud_from(positions);
        let normals = estimate_normals(&pc, 8, Vec3::new(0.0, 0.0, 2.0)).unwrap();
        for n in normals {
            assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-3, "{n:?}");
        }
    }

    #[test]
    fn sphere_cap_normals_point_outward() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // Cap facing the viewpoint; every true normal satisfies
        // n . (viewpoint - p) > 0 there, so no flip hides a PCA error.
        let mut positions = Vec::new();
        while positions.len() < 1500 {
            let p = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if let Some(u) = p.normalized() {
                if u.z > 0.4 {
                    positions.push(u);
                }
            }
        }
        let pc = cloud_from(positions.clone());
        let normals = estimate_normals(&pc, 8, Vec3::new(0.0, 0.0, 3.0)).unwrap();
        for (n, p) in normals.iter().zip(&positions) {
            assert!(n.dot(*p) > 0.0, "normal flipped inward at {p:?}");
            assert!(n.dot(*p) > 0.9, "normal not radial: {n:?} at {p:?}");
        }
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pc = cloud_from(vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)]);
        assert!(matches!(
            estimate_normals(&pc, 8, Vec3::ZERO),
            Err(GeometryError::InsufficientPoints { needed: 8, got: 2 })
        ));
        assert!(matches!(
            estimate_normals(&pc, 2, Vec3::ZERO),
            Err(GeometryError::DegenerateInput(_))
        ));
    }

    #[test]
    fn outputs_unit_length_and_face_viewpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let positions: Vec<Vec3> = (0..300)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        let viewpoint = Vec3::new(0.5, -0.5, 1.0);
        let pc = cloud_from(positions.clone());
        let normals = estimate_normals(&pc, 8, viewpoint).unwrap();
        for (n, p) in normals.iter().zip(&positions) {
            assert!((n.norm() - 1.0).abs() < 1e-6);
            assert!(n.dot(viewpoint - *p) >= 0.0);
        }
    }

    #[test]
    fn grid_knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for trial in 0..20 {
            let n = 50 + trial * 37;
            let positions: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-0.1..0.1),
                    )
                })
                .collect();
            let index = GridIndex::build(&positions);
            for qi in (0..n).step_by(7) {
                let got = index.knn(positions[qi], 8);
                let want = crate::reference::brute_force_knn(&positions, positions[qi], 8);
                assert_eq!(got, want, "query {qi} of {n}");
            }
        }
    }

    #[test]
    fn normals_match_brute_force_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let positions: Vec<Vec3> = (0..400)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let viewpoint = Vec3::new(0.0, 0.0, 4.0);
        let pc = cloud_from(positions.clone());
        let fast = estimate_normals(&pc, 8, viewpoint).unwrap();
        let slow = crate::reference::normals_brute_force(&positions, 8, viewpoint);
        // Identical neighbor sets and accumulation order make this exact.
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // diag(1, 2, 3) rotated by a known orthonormal basis.
        let r = crate::geometry::types::Mat3::rot_z(0.7);
        let d = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]];
        // a = r * d * r^T
        let rd = r.mul_mat(&crate::geometry::types::Mat3 { m: d });
        let a = rd.mul_mat(&r.transpose());
        let (vals, vecs) = symmetric_eigen_3x3(a.m);
        let mut sorted = vals;
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((sorted[0] - 1.0).abs() < 1e-12);
        assert!((sorted[1] - 2.0).abs() < 1e-12);
        assert!((sorted[2] - 3.0).abs() < 1e-12);
        // Eigenvector check: a v = lambda v.
        for i in 0..3 {
            let v = Vec3::new(vecs[0][i], vecs[1][i], vecs[2][i]);
            let av = crate::geometry::types::Mat3 { m: a.m }.mul_vec(v);
            assert!((av - v * vals[i]).norm() < 1e-10);
        }
    }
}
