use nalgebra::Vector3;

use super::pose::Pose6D;
use super::semantic::SemanticClass;
use crate::error::{Error, Result};

/// Row-major image buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Depth in meters along the optical axis; 0 marks an invalid pixel.
pub type DepthImage = Image<f32>;
pub type ColorImage = Image<[u8; 3]>;
pub type SemanticImage = Image<SemanticClass>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Pinhole camera with the given horizontal field of view and square pixels.
    pub fn from_hfov(hfov_rad: f64, width: usize, height: usize) -> Self {
        let f = width as f64 / 2.0 / (hfov_rad / 2.0).tan();
        Self {
            fx: f,
            fy: f,
            cx: (width / 2) as f64,
            cy: (height / 2) as f64,
            width,
            height,
        }
    }

    /// 90° horizontal FOV, 64×48 camera.
    pub fn desk_default() -> Self {
        Self::from_hfov(std::f64::consts::FRAC_PI_2, 64, 48)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// Unit-depth ray through pixel (u, v) in the optical frame (x right, y down, z forward).
    #[inline]
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / 2.0 / self.fx).atan()
    }
}

/// Optical frame (x right, y down, z forward) to body frame (x forward, y left, z up).
#[inline]
pub fn optical_to_body(p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(p.z, -p.x, -p.y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub semantic: SemanticClass,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

/// Lifts every valid depth pixel into a world-frame point carrying its color and class.
pub fn unproject_depth(
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    cam_pose: &Pose6D,
    color: &ColorImage,
    sem: &SemanticImage,
) -> Result<PointCloud> {
    let dims = depth.dims();
    if color.dims() != dims || sem.dims() != dims || dims != (intr.width, intr.height) {
        return Err(Error::Shape(format!(
            "depth {:?}, color {:?}, semantic {:?}, intrinsics {}x{}",
            dims,
            color.dims(),
            sem.dims(),
            intr.width,
            intr.height
        )));
    }
    cam_pose.check_unit()?;
    let rot = cam_pose.rotation();
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.get(u, v);
            if !(d > 0.0) || !d.is_finite() {
                continue;
            }
            let optical = intr.pixel_ray(u as f64, v as f64) * d as f64;
            let world = rot * optical_to_body(&optical) + cam_pose.position;
            points.push(CloudPoint {
                position: world,
                color: color.get(u, v),
                semantic: sem.get(u, v),
            });
        }
    }
    Ok(PointCloud { points })
}
