use std::io::{Read, Write};
use std::path::Path;

use super::types::{Pose, Vec3};
use super::GeometryError;

/// One measured surface point with its monochrome intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: Vec3,
    /// Clamped to [0, 1].
    pub intensity: f32,
}

/// Unordered point list in a single coordinate frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Apply a rigid transform to every point; intensity untouched.
pub fn transform_cloud(pc: &PointCloud, t: &Pose) -> PointCloud {
    PointCloud {
        points: pc
            .points
            .iter()
            .map(|p| Point {
                position: t.apply(p.position),
                intensity: p.intensity,
            })
            .collect(),
    }
}

/// Keep exactly the points inside the axis-aligned cube [center - extent/2,
/// center + extent/2). Half-open on the max side so a boundary point belongs
/// to a unique cell.
pub fn crop_cloud(pc: &PointCloud, center: Vec3, extent: f64) -> PointCloud {
    let half = extent / 2.0;
    let lo = center - Vec3::new(half, half, half);
    let hi = center + Vec3::new(half, half, half);
    let inside = |p: Vec3| {
        p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y && p.z >= lo.z && p.z < hi.z
    };
    PointCloud {
        points: pc
            .points
            .iter()
            .copied()
            .filter(|p| inside(p.position))
            .collect(),
    }
}

const CLOUD_MAGIC: &[u8; 4] = b"LPC1";

/// Write the cloud in the LPC1 layout: magic, u32 LE count, then
/// count records of little-endian f32 (x, y, z, i).
pub fn save_point_cloud(pc: &PointCloud, path: &Path) -> Result<(), GeometryError> {
    let mut buf = Vec::with_capacity(8 + pc.points.len() * 16);
    buf.extend_from_slice(CLOUD_MAGIC);
    let count = u32::try_from(pc.points.len())
        .map_err(|_| GeometryError::MalformedInput("point count exceeds u32"))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for p in &pc.points {
        buf.extend_from_slice(&(p.position.x as f32).to_le_bytes());
        buf.extend_from_slice(&(p.position.y as f32).to_le_bytes());
        buf.extend_from_slice(&(p.position.z as f32).to_le_bytes());
        buf.extend_from_slice(&p.intensity.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_point_cloud(path: &Path) -> Result<PointCloud, GeometryError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != CLOUD_MAGIC {
        return Err(GeometryError::MalformedInput("bad point cloud header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + count * 16 {
        return Err(GeometryError::MalformedInput("truncated point cloud body"));
    }
    let mut points = Vec::with_capacity(count);
    let mut at = 8;
    let read_f32 = |at: &mut usize| {
        let v = f32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
        *at += 4;
        v
    };
    for _ in 0..count {
        let x = read_f32(&mut at);
        let y = read_f32(&mut at);
        let z = read_f32(&mut at);
        let i = read_f32(&mut at);
        points.push(Point {
            position: Vec3::new(x as f64, y as f64, z as f64),
            intensity: i,
        });
    }
    Ok(PointCloud { points })
}
