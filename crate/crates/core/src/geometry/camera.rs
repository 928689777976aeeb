use serde::{Deserialize, Serialize};

use super::cloud::{Point, PointCloud};
use super::types::Vec3;
use super::GeometryError;

/// Pinhole camera intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::DegenerateInput("focal length must be > 0"));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(GeometryError::DegenerateInput(
                "principal point outside image",
            ));
        }
        Ok(CameraIntrinsics {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        })
    }

    /// Default rig: square image, fx = fy = 0.75 * width, principal point at
    /// the image center.
    pub fn standard(width: usize, height: usize) -> Self {
        CameraIntrinsics::new(
            width,
            height,
            0.75 * width as f64,
            0.75 * width as f64,
            width as f64 / 2.0,
            height as f64 / 2.0,
        )
        .expect("standard intrinsics are valid")
    }

    /// Camera-frame ray direction through pixel (u, v), not normalized.
    /// Camera looks along +z, x right, y down.
    pub fn ray_dir(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new(
            (u as f64 - self.cx) / self.fx,
            (v as f64 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Row-major single-channel image; `data[v * width + u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, GeometryError> {
        if data.len() != width * height {
            return Err(GeometryError::MalformedInput(
                "image buffer length != width * height",
            ));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f32) {
        self.data[v * self.width + u] = value;
    }
}

/// Back-project a depth + intensity image pair into a camera-frame point
/// cloud. Depth is distance along the optical axis; 0 or NaN marks an
/// invalid pixel, which is dropped.
pub fn unproject(
    depth: &Image,
    intensity: &Image,
    k: &CameraIntrinsics,
) -> Result<PointCloud, GeometryError> {
    if depth.width != intensity.width || depth.height != intensity.height {
        return Err(GeometryError::DimensionMismatch {
            width0: depth.width,
            height0: depth.height,
            width1: intensity.width,
            height1: intensity.height,
        });
    }
    if depth.width != k.width || depth.height != k.height {
        return Err(GeometryError::DimensionMismatch {
            width0: depth.width,
            height0: depth.height,
            width1: k.width,
            height1: k.height,
        });
    }
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.get(u, v) as f64;
            if !(d > 0.0) || !d.is_finite() {
                continue;
            }
            let p = Vec3::new(
                d * (u as f64 - k.cx) / k.fx,
                d * (v as f64 - k.cy) / k.fy,
                d,
            );
            if !p.is_finite() {
                continue;
            }
            points.push(Point {
                position: p,
                intensity: intensity.get(u, v).clamp(0.0, 1.0),
            });
        }
    }
    Ok(PointCloud { points })
}
