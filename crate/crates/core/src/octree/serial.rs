use super::{LeafFeatures, Octree, OctreeError, MAX_DEPTH};
use crate::geometry::Vec3;

const OCTREE_MAGIC: &[u8; 4] = b"LOC1";

/// Encode as: magic, u8 d_max, f32 center x3, f32 extent, per-level u8
/// child-occupancy masks in breadth-first order (root first; bit k marks
/// child octant k), then f32 leaf features x5 in leaf order. Output bytes
/// are a pure function of the octree.
pub fn serialize_octree(o: &Octree) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(OCTREE_MAGIC);
    out.push(o.d_max());
    let c = o.center();
    for v in [c.x, c.y, c.z, o.extent()] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    // Level l masks are derived from the occupied cells one level deeper.
    // The root mask is always present, zero for an empty octree.
    for level in 0..o.d_max() {
        let parents = if level == 0 {
            vec![0u32]
        } else {
            o.occupied_cells(level)
        };
        let children = o.occupied_cells(level + 1);
        let mut masks = vec![0u8; parents.len()];
        let mut pi = 0;
        for child in children {
            let parent = child >> 3;
            while parents[pi] != parent {
                pi += 1;
            }
            masks[pi] |= 1 << (child & 7);
        }
        out.extend_from_slice(&masks);
    }
    for f in o.features() {
        for v in f.as_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn deserialize_octree(bytes: &[u8]) -> Result<Octree, OctreeError> {
    let take = |at: &mut usize, n: usize| -> Result<&[u8], OctreeError> {
        if *at + n > bytes.len() {
            return Err(OctreeError::MalformedInput("truncated octree data"));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let mut at = 0;
    if take(&mut at, 4)? != OCTREE_MAGIC {
        return Err(OctreeError::MalformedInput("bad magic"));
    }
    let d_max = take(&mut at, 1)?[0];
    if d_max == 0 || d_max > MAX_DEPTH {
        return Err(OctreeError::MalformedInput("depth out of range"));
    }
    let read_f32 = |at: &mut usize| -> Result<f32, OctreeError> {
        Ok(f32::from_le_bytes(take(at, 4)?.try_into().unwrap()))
    };
    let center = Vec3::new(
        read_f32(&mut at)? as f64,
        read_f32(&mut at)? as f64,
        read_f32(&mut at)? as f64,
    );
    let extent = read_f32(&mut at)? as f64;
    if !(extent > 0.0) || !extent.is_finite() || !center.is_finite() {
        return Err(OctreeError::MalformedInput("bad volume descriptor"));
    }

    // Walk the mask tree breadth-first to recover leaf codes.
    let mut cells = vec![0u32];
    for _level in 0..d_max {
        let mut next = Vec::new();
        for &cell in &cells {
            let mask = take(&mut at, 1)?[0];
            for k in 0..8u32 {
                if mask & (1 << k) != 0 {
                    next.push(cell << 3 | k);
                }
            }
        }
        cells = next;
    }
    let mut features = Vec::with_capacity(cells.len());
    for _ in 0..cells.len() {
        let mut f = [0f32; 5];
        for v in f.iter_mut() {
            *v = f32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
        }
        features.push(LeafFeatures::from_array(f));
    }
    if at != bytes.len() {
        return Err(OctreeError::MalformedInput("trailing bytes"));
    }
    Octree::from_parts(d_max, center, extent, cells, features)
}
