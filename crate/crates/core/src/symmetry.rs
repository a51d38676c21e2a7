//! Proper symmetry classes, orientation unification, pose representatives,
//! and symmetry-aware pose distances.
//!
//! A rigid object's proper symmetry class describes which rotations leave
//! its static appearance unchanged. Poses of symmetric objects are compared
//! through finite sets of Euclidean *representative* vectors; the distance
//! between two poses is the smallest distance between their representative
//! sets, which makes the metric invariant under every symmetry element.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::geom::{Mat3, Pose, Rotation, Vec3};
use crate::{Error, Result};

/// Tolerance used to validate finite symmetry groups (identity membership
/// and closure under composition).
pub const GROUP_TOL: f64 = 1e-9;

/// Proper symmetry class of a rigid object.
///
/// Continuous symmetries are assumed to be about the object's z-axis; other
/// axes have to be baked into the mesh frame beforehand.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryClass {
    /// No proper symmetry; the orientation is already unique.
    NonSymmetric,
    /// Any rotation maps the object onto itself (e.g. a ball).
    Spherical,
    /// Continuous rotation symmetry about the z-axis (e.g. a cone).
    Revolution,
    /// Revolution symmetry plus a half-turn flip (e.g. a cylinder).
    RevolutionRotoreflection,
    /// Discrete n-fold rotation symmetry about the z-axis only.
    FiniteZ { order: u32 },
    /// A general finite rotation group (symmetries about multiple axes).
    FiniteGroup { rotations: Vec<Rotation> },
}

impl SymmetryClass {
    /// Checks the structural invariants of the class.
    ///
    /// `FiniteZ` requires order >= 2. `FiniteGroup` must contain the
    /// identity and be closed under composition within [`GROUP_TOL`].
    pub fn validate(&self) -> Result<()> {
        match self {
            SymmetryClass::FiniteZ { order } => {
                if *order < 2 {
                    return Err(Error::invalid("finite_z symmetry needs order >= 2"));
                }
            }
            SymmetryClass::FiniteGroup { rotations } => {
                if rotations.is_empty() {
                    return Err(Error::invalid("finite_group symmetry has no elements"));
                }
                let identity = Rotation::identity();
                if !rotations
                    .iter()
                    .any(|r| r.max_abs_diff(&identity) <= GROUP_TOL)
                {
                    return Err(Error::invalid("finite_group does not contain the identity"));
                }
                for a in rotations {
                    for b in rotations {
                        let p = *a * *b;
                        if !rotations.iter().any(|r| r.max_abs_diff(&p) <= GROUP_TOL) {
                            return Err(Error::invalid(
                                "finite_group is not closed under composition",
                            ));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Explicit elements for the finite classes, identity first.
    ///
    /// Returns `None` for classes whose symmetry set is not finite
    /// (spherical and the two revolution classes).
    pub fn elements(&self) -> Option<Vec<Rotation>> {
        match self {
            SymmetryClass::NonSymmetric => Some(vec![Rotation::identity()]),
            SymmetryClass::FiniteZ { order } => {
                let n = *order as usize;
                Some(
                    (0..n)
                        .map(|k| {
                            if k == 0 {
                                Rotation::identity()
                            } else {
                                Rotation::rot_z(2.0 * std::f64::consts::PI * k as f64 / n as f64)
                            }
                        })
                        .collect(),
                )
            }
            SymmetryClass::FiniteGroup { rotations } => {
                // Identity first so that tie-breaking during unification is
                // stable under repeated application.
                let identity = Rotation::identity();
                let mut out = Vec::with_capacity(rotations.len());
                let mut rest = Vec::new();
                for r in rotations {
                    if r.max_abs_diff(&identity) <= GROUP_TOL && out.is_empty() {
                        out.push(Rotation::identity());
                    } else {
                        rest.push(*r);
                    }
                }
                out.extend(rest);
                Some(out)
            }
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.elements().is_some()
    }
}

/// Wire format: `{"kind": "finite_z", "order": 4}`, finite groups carry
/// their rotations as row-major 9-number matrices.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SymmetrySerde {
    None,
    Spherical,
    Revolution,
    RevolutionRotoreflection,
    FiniteZ { order: u32 },
    FiniteGroup { rotations: Vec<[f64; 9]> },
}

impl Serialize for SymmetryClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            SymmetryClass::NonSymmetric => SymmetrySerde::None,
            SymmetryClass::Spherical => SymmetrySerde::Spherical,
            SymmetryClass::Revolution => SymmetrySerde::Revolution,
            SymmetryClass::RevolutionRotoreflection => SymmetrySerde::RevolutionRotoreflection,
            SymmetryClass::FiniteZ { order } => SymmetrySerde::FiniteZ { order: *order },
            SymmetryClass::FiniteGroup { rotations } => SymmetrySerde::FiniteGroup {
                rotations: rotations.iter().map(|r| r.to_row_major()).collect(),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymmetryClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SymmetrySerde::deserialize(d)?;
        let out = match repr {
            SymmetrySerde::None => SymmetryClass::NonSymmetric,
            SymmetrySerde::Spherical => SymmetryClass::Spherical,
            SymmetrySerde::Revolution => SymmetryClass::Revolution,
            SymmetrySerde::RevolutionRotoreflection => SymmetryClass::RevolutionRotoreflection,
            SymmetrySerde::FiniteZ { order } => SymmetryClass::FiniteZ { order },
            SymmetrySerde::FiniteGroup { rotations } => {
                let rotations = rotations
                    .iter()
                    .map(Rotation::from_row_major)
                    .collect::<Result<Vec<_>>>()
                    .map_err(serde::de::Error::custom)?;
                SymmetryClass::FiniteGroup { rotations }
            }
        };
        out.validate().map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

/// Radial and axial scales `(lambda_r, lambda_z)` of a revolution object,
/// read off the surface-moment square root.
pub fn revolution_scalars(lambda: &Mat3) -> (f64, f64) {
    let lr = 0.5 * (lambda[(0, 0)] + lambda[(1, 1)]);
    let lz = lambda[(2, 2)];
    (lr, lz)
}

/// Scalar weight of the revolution representative: `sqrt(lr^2 + lz^2)`.
pub fn revolution_lambda(lambda: &Mat3) -> f64 {
    let (lr, lz) = revolution_scalars(lambda);
    lr.hypot(lz)
}

/// Canonicalizes a pose by composing its rotation with a symmetry element.
///
/// The translation is never touched. Rules per class:
/// * non-symmetric: unchanged;
/// * spherical: rotation reset to the identity;
/// * revolution: the residual z-rotation is resolved in closed form by
///   minimizing the z-component of the rotated y-axis (ties pick a zero
///   extra rotation);
/// * revolution with rotoreflection: additionally flips 180 degrees about
///   the object's y-axis when that increases the x-component of the rotated
///   z-axis;
/// * finite z: minimizes the z-component of the rotated y-axis over the n
///   discrete z-rotations;
/// * finite group: picks the element giving the smallest rotation angle.
pub fn unify_orientation(pose: &Pose, sym: &SymmetryClass) -> Pose {
    let rot = match sym {
        SymmetryClass::NonSymmetric => pose.rotation,
        SymmetryClass::Spherical => Rotation::identity(),
        SymmetryClass::Revolution => unify_revolution(&pose.rotation),
        SymmetryClass::RevolutionRotoreflection => {
            let r = unify_revolution(&pose.rotation);
            // Flip about the object's y-axis if that raises the x-component
            // of the rotated z-axis.
            let zx = r.matrix()[(0, 2)];
            if -zx > zx {
                r * Rotation::rot_y(std::f64::consts::PI)
            } else {
                r
            }
        }
        SymmetryClass::FiniteZ { .. } | SymmetryClass::FiniteGroup { .. } => {
            let elements = sym.elements().expect("finite class");
            match sym {
                SymmetryClass::FiniteZ { .. } => {
                    // Minimal z-component of the rotated y-axis, first
                    // minimizer wins.
                    let mut best = pose.rotation;
                    let mut best_zy = f64::INFINITY;
                    for h in &elements {
                        let cand = pose.rotation * *h;
                        let zy = cand.matrix()[(2, 1)];
                        if zy < best_zy {
                            best_zy = zy;
                            best = cand;
                        }
                    }
                    best
                }
                _ => {
                    // Smallest rotation angle, first minimizer wins.
                    let mut best = pose.rotation;
                    let mut best_angle = f64::INFINITY;
                    for h in &elements {
                        let cand = pose.rotation * *h;
                        let a = cand.angle();
                        if a < best_angle {
                            best_angle = a;
                            best = cand;
                        }
                    }
                    best
                }
            }
        }
    };
    Pose {
        rotation: rot,
        translation: pose.translation,
    }
}

/// Closed-form residual z-rotation minimizing the z-component of the
/// rotated y-axis. The z-component of `R * Rz(theta) * e_y` is
/// `a cos(theta) + b sin(theta)` with `a = R[2][1]`, `b = -R[2][0]`.
fn unify_revolution(r: &Rotation) -> Rotation {
    let m = r.matrix();
    let a = m[(2, 1)];
    let b = -m[(2, 0)];
    if a == 0.0 && b == 0.0 {
        // Degenerate: object z-axis aligned with the camera z-axis, every
        // residual rotation ties. Keep the pose as-is.
        return *r;
    }
    let theta = f64::atan2(-b, -a);
    if theta == 0.0 {
        *r
    } else {
        *r * Rotation::rot_z(theta)
    }
}

/// Representative vectors of a pose for a given symmetry class.
///
/// * non-symmetric: one 12-vector `vec(R * Lambda) || t`;
/// * finite classes: one 12-vector `vec(R * H * Lambda) || t` per element;
/// * revolution: one 6-vector `lambda * (R e_z) || t`;
/// * rotoreflection: two 6-vectors `+/- lambda * (R e_z) || t`;
/// * spherical: the bare translation.
pub fn representatives(pose: &Pose, sym: &SymmetryClass, lambda: &Mat3) -> Vec<DVector<f64>> {
    let t = &pose.translation;
    match sym {
        SymmetryClass::Spherical => vec![DVector::from_column_slice(&[t.x, t.y, t.z])],
        SymmetryClass::Revolution | SymmetryClass::RevolutionRotoreflection => {
            let lam = revolution_lambda(lambda);
            let axis = pose.rotation * Vec3::z();
            let mut out = vec![axis_rep(lam, &axis, t)];
            if matches!(sym, SymmetryClass::RevolutionRotoreflection) {
                out.push(axis_rep(-lam, &axis, t));
            }
            out
        }
        _ => {
            let elements = sym.elements().expect("finite class");
            elements
                .iter()
                .map(|h| {
                    let m = pose.rotation.matrix() * h.matrix() * lambda;
                    let mut v = Vec::with_capacity(12);
                    for row in 0..3 {
                        for col in 0..3 {
                            v.push(m[(row, col)]);
                        }
                    }
                    v.extend_from_slice(&[t.x, t.y, t.z]);
                    DVector::from_vec(v)
                })
                .collect()
        }
    }
}

fn axis_rep(lam: f64, axis: &Vec3, t: &Vec3) -> DVector<f64> {
    DVector::from_column_slice(&[lam * axis.x, lam * axis.y, lam * axis.z, t.x, t.y, t.z])
}

/// Symmetry-aware pose distance: the minimum Euclidean distance between the
/// representative sets of the two poses. Symmetric, non-negative, and zero
/// exactly when the poses differ by a symmetry element.
pub fn pose_distance(p1: &Pose, p2: &Pose, sym: &SymmetryClass, lambda: &Mat3) -> f64 {
    let dt2 = (p1.translation - p2.translation).norm_squared();
    match sym {
        SymmetryClass::Spherical => dt2.sqrt(),
        SymmetryClass::Revolution => {
            let lam = revolution_lambda(lambda);
            let a1 = p1.rotation * Vec3::z();
            let a2 = p2.rotation * Vec3::z();
            (lam * lam * (a1 - a2).norm_squared() + dt2).sqrt()
        }
        SymmetryClass::RevolutionRotoreflection => {
            let lam = revolution_lambda(lambda);
            let a1 = p1.rotation * Vec3::z();
            let a2 = p2.rotation * Vec3::z();
            let d2 = (a1 - a2).norm_squared().min((a1 + a2).norm_squared());
            (lam * lam * d2 + dt2).sqrt()
        }
        _ => {
            let elements = sym.elements().expect("finite class");
            // Minimum over all pairs of representatives. Precompute the
            // rotated moment matrices once per side.
            let reps1: Vec<Mat3> = elements
                .iter()
                .map(|h| p1.rotation.matrix() * h.matrix() * lambda)
                .collect();
            let reps2: Vec<Mat3> = elements
                .iter()
                .map(|h| p2.rotation.matrix() * h.matrix() * lambda)
                .collect();
            let mut best = f64::INFINITY;
            for m1 in &reps1 {
                for m2 in &reps2 {
                    let d2 = (m1 - m2).norm_squared();
                    if d2 < best {
                        best = d2;
                    }
                }
            }
            (best + dt2).sqrt()
        }
    }
}

/// Pose distance in units of one tenth of the object diameter.
pub fn relative_pose_distance(
    p1: &Pose,
    p2: &Pose,
    sym: &SymmetryClass,
    lambda: &Mat3,
    diameter: f64,
) -> Result<f64> {
    if diameter <= 0.0 || !diameter.is_finite() {
        return Err(Error::invalid(format!(
            "object diameter must be positive, got {diameter}"
        )));
    }
    Ok(pose_distance(p1, p2, sym, lambda) / (0.1 * diameter))
}

/// True when the pose estimate is within the correctness threshold, i.e.
/// the relative pose distance is strictly below 1.
pub fn is_correct(
    p1: &Pose,
    p2: &Pose,
    sym: &SymmetryClass,
    lambda: &Mat3,
    diameter: f64,
) -> Result<bool> {
    Ok(relative_pose_distance(p1, p2, sym, lambda, diameter)? < 1.0)
}
