use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera. Camera space follows the COLMAP/OpenCV convention:
/// `+x` right, `+y` down, `+z` forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Rigid world-to-camera transform.
    pub world_to_camera: Matrix4<f64>,
    pub near_clip: f64,
}

impl Camera {
    /// A camera at `eye` looking at `target`, with a horizontal field of view
    /// `fov_x` (radians) and the principal point at the image centre.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        width: usize,
        height: usize,
        fov_x: f64,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidArgument("camera eye coincides with target".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::InvalidArgument("camera up vector is parallel to view direction".into()));
        }
        let right = right.normalize();
        // +y points down in image space.
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        let mut w2c = Matrix4::identity();
        w2c.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        w2c.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        let cam = Camera {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            world_to_camera: w2c,
            near_clip: 0.01,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("camera has zero-sized image".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.near_clip > 0.0) {
            return Err(Error::InvalidArgument(format!("near_clip must be > 0, got {}", self.near_clip)));
        }
        let r = self.rotation();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        let bottom = self.world_to_camera.fixed_view::<1, 4>(3, 0);
        if err > 1e-6 || (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).abs().max() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "world_to_camera is not rigid (orthonormality error {err:e})"
            )));
        }
        if r.determinant() < 0.0 {
            return Err(Error::InvalidArgument("world_to_camera contains a reflection".into()));
        }
        Ok(())
    }

    /// The same camera after moving the whole world by the rigid transform
    /// `world_transform` (new_world = T * old_world).
    pub fn transformed(&self, world_transform: &Matrix4<f64>) -> Result<Self> {
        let inv = world_transform
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("transform is not invertible".into()))?;
        let mut cam = self.clone();
        cam.world_to_camera = self.world_to_camera * inv;
        Ok(cam)
    }
}
