use crate::geometry::Vec3;

/// The grasp region: a box centered below the gripper frame, rotated with
/// the gripper yaw about the vertical axis.
#[derive(Debug, Clone, Copy)]
pub struct GraspRegion {
    pub center: Vec3,
    pub yaw: f64,
    pub half: Vec3,
}

impl GraspRegion {
    /// Horizontal box axes in world coordinates.
    fn axes(&self) -> (Vec3, Vec3) {
        let (s, c) = self.yaw.sin_cos();
        (Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.center;
        let (ax, ay) = self.axes();
        d.dot(ax).abs() <= self.half.x
            && d.dot(ay).abs() <= self.half.y
            && d.z.abs() <= self.half.z
    }

    /// Overlap test against a world-aligned box, exact for this pairing:
    /// both boxes share the vertical axis, so the test splits into a z
    /// interval check and a 2D separating-axis check over the four
    /// horizontal face normals.
    pub fn intersects_aabb(&self, lo: Vec3, hi: Vec3) -> bool {
        if self.center.z - self.half.z > hi.z || self.center.z + self.half.z < lo.z {
            return false;
        }
        let (ax, ay) = self.axes();
        let region_corners: [Vec3; 4] = [
            self.center + ax * self.half.x + ay * self.half.y,
            self.center + ax * self.half.x - ay * self.half.y,
            self.center - ax * self.half.x + ay * self.half.y,
            self.center - ax * self.half.x - ay * self.half.y,
        ];
        let aabb_corners: [Vec3; 4] = [
            Vec3::new(lo.x, lo.y, 0.0),
            Vec3::new(lo.x, hi.y, 0.0),
            Vec3::new(hi.x, lo.y, 0.0),
            Vec3::new(hi.x, hi.y, 0.0),
        ];
        let axes2d = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), ax, ay];
        for axis in axes2d {
            let (a_min, a_max) = project(&region_corners, axis);
            let (b_min, b_max) = project(&aabb_corners, axis);
            if a_min > b_max || b_min > a_max {
                return false;
            }
        }
        true
    }
}

fn project(corners: &[Vec3; 4], axis: Vec3) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for c in corners {
        let t = c.dot(axis);
        min = min.min(t);
        max = max.max(t);
    }
    (min, max)
}
