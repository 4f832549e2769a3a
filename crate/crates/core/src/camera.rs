//! Pinhole cameras: `-z` is the viewing axis, `+y` is up in camera space and
//! image rows grow downward. Pixel `(px, py)` has its center at
//! `(px + 0.5, py + 0.5)` in continuous image coordinates.

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Square pixels with the principal point at the image center.
    pub fn from_fov(width: u32, height: u32, horizontal_fov_deg: f64) -> Self {
        let fx = 0.5 * width as f64 / (0.5 * horizontal_fov_deg.to_radians()).tan();
        Self {
            fx,
            fy: fx,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub camera_to_world: Matrix4<f64>,
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
}

impl CameraFrame {
    pub fn new(camera_to_world: Matrix4<f64>, intrinsics: Intrinsics, near: f64, far: f64) -> Result<Self> {
        let cam = Self {
            camera_to_world,
            intrinsics,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidArgument(format!(
                "camera needs 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if k.width == 0 || k.height == 0 {
            return Err(Error::InvalidArgument("camera resolution must be positive".into()));
        }
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if !(0.0..=k.width as f64).contains(&k.cx) || !(0.0..=k.height as f64).contains(&k.cy) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside the {}x{} image",
                k.cx, k.cy, k.width, k.height
            )));
        }
        let r = self.rotation();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= 1e-9) || r.determinant() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "camera rotation is not a proper rotation (orthonormality error {err:e})"
            )));
        }
        let last = self.camera_to_world.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidArgument("camera_to_world bottom row must be [0 0 0 1]".into()));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.camera_to_world.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn center(&self) -> Vec3 {
        self.camera_to_world.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    /// Unit world-space direction through continuous image point `(u, v)`.
    pub fn direction_through(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        let local = Vec3::new((u - k.cx) / k.fx, -(v - k.cy) / k.fy, -1.0);
        (self.rotation() * local).normalize()
    }

    /// Continuous image coordinates of a world point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let local = self.rotation().transpose() * (p - self.center());
        if local.z >= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let depth = -local.z;
        Some((k.cx + k.fx * local.x / depth, k.cy - k.fy * local.y / depth))
    }
}

/// Camera-to-world transform at `eye` whose `-z` axis passes through `target`.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Matrix4<f64>> {
    let forward = target - eye;
    if forward.norm() < 1e-12 {
        return Err(Error::DegenerateCamera(format!(
            "look-at target {target:?} coincides with the camera center"
        )));
    }
    let forward = forward.normalize();
    let right = forward.cross(&up);
    if right.norm() < 1e-12 {
        return Err(Error::DegenerateCamera("viewing direction is parallel to the up vector".into()));
    }
    let right = right.normalize();
    let true_up = right.cross(&forward);
    let back = -forward;
    let mut m = Matrix4::identity();
    for i in 0..3 {
        m[(i, 0)] = right[i];
        m[(i, 1)] = true_up[i];
        m[(i, 2)] = back[i];
        m[(i, 3)] = eye[i];
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub n_views: usize,
    pub radius: f64,
    pub height: f64,
    pub lookat: [f64; 3],
    /// Azimuth of the first camera in degrees.
    #[serde(default)]
    pub azimuth_offset_deg: f64,
}

/// Cameras evenly spaced on the horizontal circle of `ring.radius` around the
/// vertical axis through `lookat`, at height `ring.height`, all aimed at
/// `lookat`. Azimuth is measured from `+x` toward `+z`.
pub fn make_ring_poses(ring: &RingSpec, intrinsics: Intrinsics, near: f64, far: f64) -> Result<Vec<CameraFrame>> {
    if ring.n_views < 2 {
        return Err(Error::InvalidArgument(format!(
            "a ring needs at least 2 views, got {}",
            ring.n_views
        )));
    }
    let target = Vec3::from(ring.lookat);
    (0..ring.n_views)
        .map(|i| {
            let az = ring.azimuth_offset_deg.to_radians()
                + std::f64::consts::TAU * i as f64 / ring.n_views as f64;
            let eye = Vec3::new(
                target.x + ring.radius * az.cos(),
                ring.height,
                target.z + ring.radius * az.sin(),
            );
            let pose = look_at(eye, target, Vec3::y())?;
            CameraFrame::new(pose, intrinsics, near, far)
        })
        .collect()
}
