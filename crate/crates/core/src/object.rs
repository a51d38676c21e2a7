//! Object models: a mesh plus everything the pipeline derives from it
//! (bounding sphere, surface samples, symmetry class, moment matrix).

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::geom::{Mat3, Pose, Vec3};
use crate::mesh::TriangleMesh;
use crate::symmetry::{self, SymmetryClass};
use crate::{Error, Result};

/// Options controlling derived-quantity computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectBuildOptions {
    /// Monte-Carlo sample count for the moment matrix.
    pub lambda_samples: usize,
    /// Stored surface point count (used by distance metrics on point sets).
    pub surface_samples: usize,
    pub seed: u64,
}

impl Default for ObjectBuildOptions {
    fn default() -> Self {
        ObjectBuildOptions {
            lambda_samples: 50_000,
            surface_samples: 1_000,
            seed: 0,
        }
    }
}

/// A rigid object known to the pipeline.
///
/// The mesh is re-centered so that the object frame origin coincides with
/// the area-weighted surface centroid; all derived quantities (diameter,
/// moment matrix, surface samples) refer to that frame.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub class_id: u32,
    pub name: String,
    pub mesh: TriangleMesh,
    /// Diameter of the smallest bounding sphere, meters.
    pub diameter: f64,
    /// Center of the smallest bounding sphere in the object frame.
    pub bounding_center: Vec3,
    pub symmetry: SymmetryClass,
    pub surface_samples: Vec<Vec3>,
    /// Square root of the area-weighted second-moment matrix (meters).
    pub lambda: Mat3,
    /// Marks geometries prone to hooking into each other.
    pub hook_like: bool,
}

impl ObjectModel {
    pub fn build(
        class_id: u32,
        name: impl Into<String>,
        mesh: TriangleMesh,
        symmetry: SymmetryClass,
        hook_like: bool,
        opts: &ObjectBuildOptions,
    ) -> Result<Self> {
        symmetry.validate()?;
        let centroid = mesh.surface_centroid();
        let mesh = mesh.translated(&(-centroid));
        let (bounding_center, radius) = mesh.bounding_sphere();
        let diameter = 2.0 * radius;
        if diameter <= 0.0 {
            return Err(Error::invalid("object has zero diameter"));
        }
        let lambda = compute_lambda(&mesh, opts.lambda_samples, opts.seed)?;
        let surface_samples = mesh
            .sample_surface(opts.surface_samples, opts.seed.wrapping_add(1))?
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        Ok(ObjectModel {
            class_id,
            name: name.into(),
            mesh,
            diameter,
            bounding_center,
            symmetry,
            surface_samples,
            lambda,
            hook_like,
        })
    }

    pub fn geometry(&self) -> ClassGeometry {
        ClassGeometry::from(self)
    }

    pub fn pose_distance(&self, p1: &Pose, p2: &Pose) -> f64 {
        symmetry::pose_distance(p1, p2, &self.symmetry, &self.lambda)
    }

    pub fn relative_pose_distance(&self, p1: &Pose, p2: &Pose) -> Result<f64> {
        symmetry::relative_pose_distance(p1, p2, &self.symmetry, &self.lambda, self.diameter)
    }

    pub fn is_correct(&self, p1: &Pose, p2: &Pose) -> Result<bool> {
        symmetry::is_correct(p1, p2, &self.symmetry, &self.lambda, self.diameter)
    }

    pub fn representatives(&self, p: &Pose) -> Vec<DVector<f64>> {
        symmetry::representatives(p, &self.symmetry, &self.lambda)
    }
}

/// The per-class data every consumer except the renderer needs: enough to
/// evaluate symmetry-aware distances without carrying the mesh around.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassGeometry {
    pub class_id: u32,
    pub name: String,
    pub diameter: f64,
    #[serde(with = "mat3_serde")]
    pub lambda: Mat3,
    pub symmetry: SymmetryClass,
    pub surface_samples: Vec<[f64; 3]>,
    pub hook_like: bool,
}

impl ClassGeometry {
    pub fn pose_distance(&self, p1: &Pose, p2: &Pose) -> f64 {
        symmetry::pose_distance(p1, p2, &self.symmetry, &self.lambda)
    }

    pub fn relative_pose_distance(&self, p1: &Pose, p2: &Pose) -> Result<f64> {
        symmetry::relative_pose_distance(p1, p2, &self.symmetry, &self.lambda, self.diameter)
    }

    pub fn is_correct(&self, p1: &Pose, p2: &Pose) -> Result<bool> {
        symmetry::is_correct(p1, p2, &self.symmetry, &self.lambda, self.diameter)
    }

    pub fn surface_points(&self) -> Vec<Vec3> {
        self.surface_samples
            .iter()
            .map(|p| Vec3::new(p[0], p[1], p[2]))
            .collect()
    }
}

// ClassGeometry stores surface samples as arrays for serde friendliness.
impl From<&ObjectModel> for ClassGeometry {
    fn from(o: &ObjectModel) -> Self {
        ClassGeometry {
            class_id: o.class_id,
            name: o.name.clone(),
            diameter: o.diameter,
            lambda: o.lambda,
            symmetry: o.symmetry.clone(),
            surface_samples: o.surface_samples.iter().map(|p| [p.x, p.y, p.z]).collect(),
            hook_like: o.hook_like,
        }
    }
}

mod mat3_serde {
    use super::Mat3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<f64> = (0..3)
            .flat_map(|r| (0..3).map(move |c| m[(r, c)]))
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat3, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Ok(Mat3::new(
            v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8],
        ))
    }
}

/// Monte-Carlo estimate of the square root of the area-weighted
/// second-moment matrix of surface points about the origin.
///
/// Deterministic given the seed. The result is symmetric positive
/// semi-definite and scales linearly with mesh size.
pub fn compute_lambda(mesh: &TriangleMesh, n_samples: usize, seed: u64) -> Result<Mat3> {
    if n_samples < 1000 {
        return Err(Error::invalid(format!(
            "lambda estimation needs at least 1000 samples, got {n_samples}"
        )));
    }
    let samples = mesh.sample_surface(n_samples, seed)?;
    let mut moment = Mat3::zeros();
    for (p, _) in &samples {
        moment += p * p.transpose();
    }
    moment /= n_samples as f64;
    // Symmetric square root via eigendecomposition; clamp tiny negative
    // eigenvalues caused by round-off.
    let eig = SymmetricEigen::new(moment);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut out = Mat3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i);
        out += v * v.transpose() * sqrt_vals[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use approx::assert_abs_diff_eq;

    #[test]
    fn lambda_of_unit_sphere_is_isotropic() {
        // Surface second moment of a unit sphere about its center is I/3,
        // so Lambda = sqrt(1/3) * I.
        let mesh = shapes::make_sphere(1.0, 32, 48);
        let lambda = compute_lambda(&mesh, 50_000, 42).unwrap();
        let expect = (1.0f64 / 3.0).sqrt();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { expect } else { 0.0 };
                assert!(
                    (lambda[(r, c)] - want).abs() < 0.02 * expect,
                    "lambda[{r}][{c}] = {} (want {want})",
                    lambda[(r, c)]
                );
            }
        }
    }

    #[test]
    fn lambda_scales_linearly_with_mesh() {
        let mesh = shapes::make_box(0.04, 0.02, 0.01);
        let l1 = compute_lambda(&mesh, 20_000, 7).unwrap();
        let l2 = compute_lambda(&mesh.scaled(2.0), 20_000, 7).unwrap();
        assert!((l2 - l1 * 2.0).abs().max() < 1e-12);
    }

    #[test]
    fn lambda_of_elongated_box_points_along_long_axis() {
        let mesh = shapes::make_box(0.10, 0.02, 0.02);
        let lambda = compute_lambda(&mesh, 50_000, 3).unwrap();
        // Quadrature oracle: analytic surface integral of the box via a
        // fine midpoint grid on each face.
        let oracle = box_surface_moment_sqrt(0.10, 0.02, 0.02);
        assert!(
            (lambda - oracle).abs().max() < 0.02 * oracle.abs().max(),
            "lambda {lambda} vs oracle {oracle}"
        );
        let eig = SymmetricEigen::new(lambda);
        let (mut max_i, mut max_v) = (0, f64::NEG_INFINITY);
        for i in 0..3 {
            if eig.eigenvalues[i] > max_v {
                max_v = eig.eigenvalues[i];
                max_i = i;
            }
        }
        let dir = eig.eigenvectors.column(max_i);
        assert!(dir[0].abs() > 0.99, "largest eigenvector not along x: {dir}");
    }

    /// Deterministic midpoint-quadrature oracle for a centered box's
    /// area-weighted surface moment square root.
    fn box_surface_moment_sqrt(sx: f64, sy: f64, sz: f64) -> Mat3 {
        let h = [sx / 2.0, sy / 2.0, sz / 2.0];
        let n = 400;
        let mut moment = Mat3::zeros();
        let mut area_total = 0.0;
        for axis in 0..3 {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let (wa, wb) = (2.0 * h[a], 2.0 * h[b]);
            let cell = (wa / n as f64) * (wb / n as f64);
            for side in [-1.0, 1.0] {
                for i in 0..n {
                    for j in 0..n {
                        let mut p = Vec3::zeros();
                        p[axis] = side * h[axis];
                        p[a] = -h[a] + (i as f64 + 0.5) * wa / n as f64;
                        p[b] = -h[b] + (j as f64 + 0.5) * wb / n as f64;
                        moment += p * p.transpose() * cell;
                        area_total += cell;
                    }
                }
            }
        }
        moment /= area_total;
        let eig = SymmetricEigen::new(moment);
        let mut out = Mat3::zeros();
        for i in 0..3 {
            let v = eig.eigenvectors.column(i);
            out += v * v.transpose() * eig.eigenvalues[i].max(0.0).sqrt();
        }
        out
    }

    #[test]
    fn lambda_rejects_small_sample_counts() {
        let mesh = shapes::make_box(0.04, 0.02, 0.01);
        assert!(compute_lambda(&mesh, 10, 0).is_err());
    }

    #[test]
    fn build_recenters_and_measures() {
        let mesh = shapes::make_box(0.04, 0.02, 0.01).translated(&Vec3::new(1.0, 2.0, 3.0));
        let obj = ObjectModel::build(
            0,
            "brick",
            mesh,
            SymmetryClass::NonSymmetric,
            false,
            &ObjectBuildOptions {
                lambda_samples: 5_000,
                surface_samples: 200,
                seed: 1,
            },
        )
        .unwrap();
        // Surface centroid back at the origin.
        assert!(obj.mesh.surface_centroid().norm() < 1e-9);
        let expect_d = 2.0 * (0.02f64.powi(2) + 0.01f64.powi(2) + 0.005f64.powi(2)).sqrt();
        assert_abs_diff_eq!(obj.diameter, expect_d, epsilon = 1e-9);
        assert_eq!(obj.surface_samples.len(), 200);
        // Samples sit on the recentered surface.
        for p in &obj.surface_samples {
            assert!(p.norm() <= obj.diameter / 2.0 + 1e-9);
        }
    }

    #[test]
    fn class_geometry_round_trips_through_json() {
        let mesh = shapes::make_cylinder(0.01, 0.04, 24);
        let obj = ObjectModel::build(
            2,
            "pin",
            mesh,
            SymmetryClass::RevolutionRotoreflection,
            false,
            &ObjectBuildOptions {
                lambda_samples: 2_000,
                surface_samples: 100,
                seed: 5,
            },
        )
        .unwrap();
        let geom = obj.geometry();
        let json = serde_json::to_string(&geom).unwrap();
        let back: ClassGeometry = serde_json::from_str(&json).unwrap();
        assert_eq!(back.class_id, 2);
        assert_eq!(back.surface_samples.len(), 100);
        assert!((back.lambda - geom.lambda).abs().max() < 1e-15);
        assert_eq!(back.diameter, geom.diameter);
    }
}
