//! Pinhole camera model with near/far clipping planes.

use serde::{Deserialize, Serialize};

use crate::geom::{Pose, Vec3};
use crate::{Error, Result};

/// Camera intrinsics plus its pose in the world frame. The optical axis is
/// +z in the camera frame, x points right, y down (image convention); depth
/// is measured along the optical axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
    pub pose: Pose,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid(format!(
                "camera needs 0 < near < far, got near {} far {}",
                self.near, self.far
            )));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be nonzero"));
        }
        Ok(())
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Camera-frame point of a pixel center at the given depth.
    pub fn unproject(&self, px: u32, py: u32, depth: f64) -> Vec3 {
        let u = px as f64 + 0.5;
        let v = py as f64 + 0.5;
        Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// World-to-camera transform.
    pub fn view(&self) -> Pose {
        self.pose.inverse()
    }

    /// x-y footprint of the viewing frustum at the given depth, as
    /// `(x_min, x_max, y_min, y_max)` in the camera frame.
    pub fn frustum_footprint(&self, depth: f64) -> (f64, f64, f64, f64) {
        let x0 = (0.0 - self.cx) / self.fx * depth;
        let x1 = (self.width as f64 - self.cx) / self.fx * depth;
        let y0 = (0.0 - self.cy) / self.fy * depth;
        let y1 = (self.height as f64 - self.cy) / self.fy * depth;
        (x0.min(x1), x0.max(x1), y0.min(y1), y0.max(y1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;

    fn cam() -> CameraModel {
        CameraModel {
            width: 128,
            height: 128,
            fx: 250.0,
            fy: 250.0,
            cx: 64.0,
            cy: 64.0,
            near: 0.4,
            far: 1.2,
            pose: Pose::identity(),
        }
    }

    #[test]
    fn validation_catches_bad_planes() {
        let mut c = cam();
        c.near = 1.5;
        assert!(c.validate().is_err());
        c.near = 0.0;
        assert!(c.validate().is_err());
        assert!(cam().validate().is_ok());
    }

    #[test]
    fn project_unproject_round_trip() {
        let c = cam();
        let p = c.unproject(40, 90, 0.8);
        let (u, v) = c.project(&p);
        assert!((u - 40.5).abs() < 1e-12);
        assert!((v - 90.5).abs() < 1e-12);
    }

    #[test]
    fn optical_center_projects_to_principal_point() {
        let c = cam();
        let (u, v) = c.project(&Vec3::new(0.0, 0.0, 0.7));
        assert_eq!((u, v), (64.0, 64.0));
    }

    #[test]
    fn view_inverts_pose() {
        let mut c = cam();
        c.pose = Pose::from_parts(Rotation::rot_x(std::f64::consts::PI), Vec3::new(0.0, 0.0, 0.9));
        let view = c.view();
        let world_point = Vec3::new(0.1, 0.2, 0.0);
        let cam_point = view.transform_point(&world_point);
        let back = c.pose.transform_point(&cam_point);
        assert!((back - world_point).norm() < 1e-12);
    }

    #[test]
    fn frustum_footprint_is_symmetric_for_centered_principal_point() {
        let c = cam();
        let (x0, x1, y0, y1) = c.frustum_footprint(0.9);
        assert!((x0 + x1).abs() < 1e-12);
        assert!((y0 + y1).abs() < 1e-12);
        assert!((x1 - 64.0 / 250.0 * 0.9).abs() < 1e-12);
        assert!((y1 - x1).abs() < 1e-12);
    }
}
