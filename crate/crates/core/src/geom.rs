//! Rotations and rigid poses.
//!
//! Rotations are stored as plain 3x3 matrices and validated against
//! orthonormality and `det = +1` on construction from untrusted data.
//! Euler angles use the intrinsic Z-Y'-X'' (yaw-pitch-roll) convention
//! with all angles canonicalized to `(-pi, pi]`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Tolerance for orthonormality and determinant checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// A proper rotation in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix after checking `m^T m = I` and `det(m) = +1`
    /// within [`ROTATION_TOL`].
    pub fn try_new(m: Mat3) -> Result<Self> {
        let gram_err = (m.transpose() * m - Mat3::identity()).abs().max();
        if gram_err > ROTATION_TOL {
            return Err(Error::invalid(format!(
                "matrix is not orthonormal (error {gram_err:.3e})"
            )));
        }
        let det_err = (m.determinant() - 1.0).abs();
        if det_err > ROTATION_TOL {
            return Err(Error::invalid(format!(
                "matrix determinant is not +1 (error {det_err:.3e})"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = angle.sin_cos();
        let k = Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
        Rotation(Mat3::identity() + k * s + k * k * (1.0 - c))
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Builds the rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler_zyx(yaw: f64, pitch: f64, roll: f64) -> Self {
        Rotation::rot_z(yaw) * Rotation::rot_y(pitch) * Rotation::rot_x(roll)
    }

    /// Extracts `(yaw, pitch, roll)` such that
    /// `self = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    ///
    /// At the gimbal singularity (`pitch = +/- pi/2`) the roll is fixed to
    /// zero so the decomposition is unique.
    pub fn euler_zyx(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let sp = -m[(2, 0)];
        if sp.abs() >= 1.0 - 1e-12 {
            let pitch = if sp > 0.0 {
                std::f64::consts::FRAC_PI_2
            } else {
                -std::f64::consts::FRAC_PI_2
            };
            let yaw = f64::atan2(-m[(0, 1)], m[(1, 1)]);
            (canonical_angle(yaw), pitch, 0.0)
        } else {
            let pitch = sp.clamp(-1.0, 1.0).asin();
            let yaw = f64::atan2(m[(1, 0)], m[(0, 0)]);
            let roll = f64::atan2(m[(2, 1)], m[(2, 2)]);
            (canonical_angle(yaw), pitch, canonical_angle(roll))
        }
    }

    /// Rotation angle of the axis-angle representation, in `[0, pi]`.
    ///
    /// The trace argument is clamped so that round-off near the identity or
    /// near half-turns cannot push `acos` out of its domain.
    pub fn angle(&self) -> f64 {
        let tr = self.0.trace().clamp(-1.0, 3.0);
        ((tr - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    /// Rotation angle with full precision near zero.
    ///
    /// The trace formula cannot resolve angles below ~3e-8 (acos loses
    /// precision at 1); small angles are measured through the sin-based
    /// skew norm instead.
    pub fn angle_accurate(&self) -> f64 {
        let coarse = self.angle();
        if coarse > 0.5 {
            return coarse;
        }
        let m = &self.0;
        let skew = Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        ) * 0.5;
        skew.norm().clamp(-1.0, 1.0).asin()
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Maximum absolute entry-wise difference to another rotation.
    pub fn max_abs_diff(&self, other: &Rotation) -> f64 {
        (self.0 - other.0).abs().max()
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Rotation::try_new(Mat3::new(
            v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8],
        ))
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Wraps an angle to the canonical range `(-pi, pi]`.
pub fn canonical_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// A rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose translation is not finite"));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_parts(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation,
        }
    }

    /// `self` applied after `rhs`: `(self * rhs)(x) = self(rhs(x))`.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -(rinv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * *p + self.translation
    }

    /// Rotation row-major (9 values) followed by the translation (3 values).
    pub fn to_flat(&self) -> [f64; 12] {
        let r = self.rotation.to_row_major();
        [
            r[0],
            r[1],
            r[2],
            r[3],
            r[4],
            r[5],
            r[6],
            r[7],
            r[8],
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_flat(v: &[f64; 12]) -> Result<Self> {
        let r: [f64; 9] = v[0..9].try_into().expect("slice length");
        Pose::new(
            Rotation::from_row_major(&r)?,
            Vec3::new(v[9], v[10], v[11]),
        )
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_flat().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 12]>::deserialize(deserializer)?;
        Pose::from_flat(&v).map_err(serde::de::Error::custom)
    }
}
