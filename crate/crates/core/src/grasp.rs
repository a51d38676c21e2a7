//! Automatic grasp-pose generation on triangle meshes.
//!
//! Suction grasps test seal formation with a rigid-rim ray model: rays cast
//! from the cup rim toward the surface must all land within an axial gap
//! budget and a normal cone. Parallel-jaw grasps pair antipodal surface
//! samples filtered by the gripper stroke and a jaw-box collision check.
//! All generation is deterministic given a seed; grasp ordering is stable.

use serde::{Deserialize, Serialize};

use crate::bvh::{orthonormal_basis, Bvh};
use crate::geom::{Mat3, Pose, Rotation, Vec3};
use crate::mesh::TriangleMesh;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParallelJawSpec {
    pub gripper_id: String,
    /// Maximum jaw opening, meters.
    pub stroke: f64,
    pub jaw_depth: f64,
    pub jaw_width: f64,
    pub closing_force: f64,
}

impl ParallelJawSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stroke <= 0.0 || self.jaw_depth <= 0.0 {
            return Err(Error::invalid(format!(
                "parallel jaw '{}' needs positive stroke and jaw depth",
                self.gripper_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuctionSpec {
    pub gripper_id: String,
    pub cup_radius: f64,
    /// Rim ray count of the seal model.
    pub perimeter_points: u32,
    /// Force and moment limits. Generation is purely geometric; these are
    /// carried through to the placement oracle.
    pub max_pull_force: f64,
    pub max_shear_force: f64,
    pub max_peel_torque: f64,
    /// Largest tolerated axial gap between rim and surface, meters.
    pub max_seal_deviation: f64,
    /// Largest tolerated angle between surface normal and cup axis, radians.
    pub max_normal_cone: f64,
}

impl SuctionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cup_radius <= 0.0 {
            return Err(Error::invalid(format!(
                "suction gripper '{}' needs a positive cup radius",
                self.gripper_id
            )));
        }
        if self.perimeter_points < 8 {
            return Err(Error::invalid(format!(
                "suction gripper '{}' needs at least 8 perimeter points",
                self.gripper_id
            )));
        }
        Ok(())
    }
}

/// One gripper in the registry. The registry order is load-bearing: it
/// fixes the grasp index layout of every downstream tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GripperSpec {
    ParallelJaw(ParallelJawSpec),
    Suction(SuctionSpec),
}

impl GripperSpec {
    pub fn id(&self) -> &str {
        match self {
            GripperSpec::ParallelJaw(s) => &s.gripper_id,
            GripperSpec::Suction(s) => &s.gripper_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GripperSpec::ParallelJaw(s) => s.validate(),
            GripperSpec::Suction(s) => s.validate(),
        }
    }
}

/// A grasp pose: gripper frame relative to the object frame. The z-axis is
/// the approach direction (pointing into the surface for suction).
#[derive(Debug, Clone)]
pub struct GraspPose {
    pub transform: Pose,
    pub gripper_id: String,
    pub local_index: u32,
    pub quality_hint: f64,
}

/// All grasps of one object class, grouped per gripper in registry order.
#[derive(Debug, Clone)]
pub struct GraspSet {
    pub class_id: u32,
    pub grippers: Vec<GripperGrasps>,
}

#[derive(Debug, Clone)]
pub struct GripperGrasps {
    pub gripper_id: String,
    pub grasps: Vec<GraspPose>,
}

impl GraspSet {
    /// Total grasp count K_j across all grippers.
    pub fn total(&self) -> usize {
        self.grippers.iter().map(|g| g.grasps.len()).sum()
    }

    /// Flat view in global index order (gripper blocks concatenated).
    pub fn iter_flat(&self) -> impl Iterator<Item = (usize, &GraspPose)> {
        self.grippers
            .iter()
            .flat_map(|g| g.grasps.iter())
            .enumerate()
    }

    /// Resolves a global grasp index to its gripper and grasp.
    pub fn by_global_index(&self, k: usize) -> Option<(&str, &GraspPose)> {
        let mut offset = 0;
        for g in &self.grippers {
            if k < offset + g.grasps.len() {
                return Some((&g.gripper_id, &g.grasps[k - offset]));
            }
            offset += g.grasps.len();
        }
        None
    }

    /// Per-gripper block layout `(gripper_id, count)` in registry order.
    pub fn blocks(&self) -> Vec<(String, usize)> {
        self.grippers
            .iter()
            .map(|g| (g.gripper_id.clone(), g.grasps.len()))
            .collect()
    }

    /// Generates grasps for every gripper in registry order.
    pub fn generate(
        class_id: u32,
        mesh: &TriangleMesh,
        grippers: &[GripperSpec],
        params: &GenParams,
        seed: u64,
    ) -> Result<GraspSet> {
        let bvh = Bvh::build(mesh);
        let mut out = Vec::with_capacity(grippers.len());
        for (gi, spec) in grippers.iter().enumerate() {
            spec.validate()?;
            let gseed = derive_seed(seed, "grasp-gen", gi as u64);
            let grasps = match spec {
                GripperSpec::Suction(s) => gen_suction_grasps(mesh, &bvh, s, params, gseed)?,
                GripperSpec::ParallelJaw(s) => {
                    gen_paralleljaw_grasps(mesh, &bvh, s, params, gseed)?
                }
            };
            out.push(GripperGrasps {
                gripper_id: spec.id().to_string(),
                grasps,
            });
        }
        Ok(GraspSet {
            class_id,
            grippers: out,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "class_id": self.class_id,
            "grippers": self.grippers.iter().map(|g| serde_json::json!({
                "gripper_id": g.gripper_id,
                "grasps": g.grasps.iter().map(|gp| serde_json::json!({
                    "t": [gp.transform.translation.x, gp.transform.translation.y, gp.transform.translation.z],
                    "r": gp.transform.rotation.to_row_major().to_vec(),
                    "quality_hint": gp.quality_hint,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<GraspSet> {
        let class_id = v["class_id"]
            .as_u64()
            .ok_or_else(|| Error::format("grasp set: missing class_id"))? as u32;
        let mut grippers = Vec::new();
        for g in v["grippers"]
            .as_array()
            .ok_or_else(|| Error::format("grasp set: missing grippers"))?
        {
            let gripper_id = g["gripper_id"]
                .as_str()
                .ok_or_else(|| Error::format("grasp set: missing gripper_id"))?
                .to_string();
            let mut grasps = Vec::new();
            for (i, gp) in g["grasps"]
                .as_array()
                .ok_or_else(|| Error::format("grasp set: missing grasps"))?
                .iter()
                .enumerate()
            {
                let t = as_f64_vec(&gp["t"], 3)?;
                let r = as_f64_vec(&gp["r"], 9)?;
                let r: [f64; 9] = r.try_into().expect("length checked");
                grasps.push(GraspPose {
                    transform: Pose::new(
                        Rotation::from_row_major(&r)?,
                        Vec3::new(t[0], t[1], t[2]),
                    )?,
                    gripper_id: gripper_id.clone(),
                    local_index: i as u32,
                    quality_hint: gp["quality_hint"].as_f64().unwrap_or(0.0),
                });
            }
            grippers.push(GripperGrasps { gripper_id, grasps });
        }
        Ok(GraspSet { class_id, grippers })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_json())
            .map_err(|e| Error::format(format!("grasp set: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<GraspSet> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        GraspSet::from_json(&v)
    }
}

fn as_f64_vec(v: &serde_json::Value, n: usize) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::format("grasp set: expected array"))?;
    if arr.len() != n {
        return Err(Error::format(format!(
            "grasp set: expected {n} numbers, got {}",
            arr.len()
        )));
    }
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::format("grasp set: expected number"))
        })
        .collect()
}

/// Tunables of the generation routines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Candidate count (surface samples for suction, point pairs for jaws).
    pub n_candidates: usize,
    /// Antipodal tolerance cone for parallel jaws, radians.
    pub antipodal_cone: f64,
    /// Extra jaw opening beyond the contact distance, meters.
    pub jaw_clearance: f64,
    /// Finger thickness along the closing axis, meters.
    pub finger_thickness: f64,
    /// Greedy-suppression radii: translation (meters) and rotation (radians).
    pub dedup_translation: f64,
    pub dedup_rotation: f64,
    /// Upper bound on kept grasps per gripper.
    pub max_keep: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            n_candidates: 2000,
            antipodal_cone: 15f64.to_radians(),
            jaw_clearance: 0.002,
            finger_thickness: 0.005,
            dedup_translation: 0.002,
            dedup_rotation: 10f64.to_radians(),
            max_keep: 12,
        }
    }
}

/// Rigid-rim seal test at a sampled surface point.
///
/// Casts `perimeter_points` rays from the rim circle (radius `cup_radius`,
/// centered at `point`, oriented by `normal`) toward the surface along
/// `-normal`. Passes iff every ray finds a hit whose axial deviation from
/// the rim plane is within `max_seal_deviation` and whose surface normal is
/// within `max_normal_cone` of the cup axis. Returns the worst axial gap
/// (infinite when some ray misses entirely).
pub fn seal_check(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    point: &Vec3,
    normal: &Vec3,
    spec: &SuctionSpec,
) -> (bool, f64) {
    let axis = normal.normalize();
    let (u, v) = orthonormal_basis(&axis);
    let start_height = 0.25 * spec.cup_radius + 2.0 * spec.max_seal_deviation;
    let t_max = start_height + 2.0 * spec.max_seal_deviation;
    let cos_cone = spec.max_normal_cone.cos();
    let mut pass = true;
    let mut worst = 0.0f64;
    let m = spec.perimeter_points as usize;
    for i in 0..m {
        let phi = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
        let rim = point + (u * phi.cos() + v * phi.sin()) * spec.cup_radius;
        let origin = rim + axis * start_height;
        match bvh.ray_intersect(mesh, &origin, &(-axis), 0.0, t_max) {
            Some(hit) => {
                let gap = (hit.t - start_height).abs();
                worst = worst.max(gap);
                if gap > spec.max_seal_deviation {
                    pass = false;
                }
                if mesh.normals()[hit.triangle].dot(&axis) < cos_cone {
                    pass = false;
                }
            }
            None => {
                pass = false;
                worst = f64::INFINITY;
            }
        }
    }
    (pass, worst)
}

/// Suction grasp generation: area-weighted surface candidates, seal test,
/// then a cup-body collision filter (the cylinder above the contact up to
/// one cup radius must stay clear of the mesh).
pub fn gen_suction_grasps(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    spec: &SuctionSpec,
    params: &GenParams,
    seed: u64,
) -> Result<Vec<GraspPose>> {
    spec.validate()?;
    if params.n_candidates == 0 {
        return Err(Error::invalid("need at least one candidate"));
    }
    let samples = mesh.sample_surface(params.n_candidates, seed)?;
    let clearance_z0 = (2.0 * spec.max_seal_deviation).min(0.5 * spec.cup_radius);
    let mut kept: Vec<GraspPose> = Vec::new();
    for (point, normal) in &samples {
        if kept.len() >= params.max_keep {
            break;
        }
        let (pass, deviation) = seal_check(mesh, bvh, point, normal, spec);
        if !pass {
            continue;
        }
        let axis = normal.normalize();
        if bvh.intersects_cylinder(mesh, point, &axis, spec.cup_radius, clearance_z0, spec.cup_radius)
        {
            continue;
        }
        // Gripper frame: z is the approach direction (into the surface).
        let z = -axis;
        let (x, _) = orthonormal_basis(&z);
        let y = z.cross(&x);
        let rot = Rotation::try_new(Mat3::from_columns(&[x, y, z]))
            .expect("orthonormal frame by construction");
        let transform = Pose::from_parts(rot, *point);
        if is_duplicate(&kept, &transform, params) {
            continue;
        }
        let quality = (1.0 - deviation / spec.max_seal_deviation).clamp(0.0, 1.0);
        kept.push(GraspPose {
            transform,
            gripper_id: spec.gripper_id.clone(),
            local_index: kept.len() as u32,
            quality_hint: quality,
        });
    }
    Ok(kept)
}

/// Parallel-jaw grasp generation from antipodal surface-sample pairs.
pub fn gen_paralleljaw_grasps(
    mesh: &TriangleMesh,
    bvh: &Bvh,
    spec: &ParallelJawSpec,
    params: &GenParams,
    seed: u64,
) -> Result<Vec<GraspPose>> {
    spec.validate()?;
    if params.n_candidates == 0 {
        return Err(Error::invalid("need at least one candidate"));
    }
    let samples = mesh.sample_surface(2 * params.n_candidates, seed)?;
    let cos_cone = params.antipodal_cone.cos();
    let mut kept: Vec<GraspPose> = Vec::new();
    for pair in samples.chunks_exact(2) {
        if kept.len() >= params.max_keep {
            break;
        }
        let (p1, n1) = pair[0];
        let (p2, n2) = pair[1];
        let diff = p2 - p1;
        let dist = diff.norm();
        if dist > spec.stroke || dist < 1e-6 {
            continue;
        }
        let a = diff / dist;
        // Anti-parallel normals and alignment with the closing axis.
        if n1.dot(&-n2) < cos_cone {
            continue;
        }
        if n1.dot(&-a) < cos_cone || n2.dot(&a) < cos_cone {
            continue;
        }
        let center = (p1 + p2) * 0.5;
        // Frame: x is the closing axis, z the approach.
        let (z, _) = orthonormal_basis(&a);
        let y = z.cross(&a);
        let rot = Rotation::try_new(Mat3::from_columns(&[a, y, z]))
            .expect("orthonormal frame by construction");
        // Jaw boxes at the commanded opening.
        let opening = dist + params.jaw_clearance;
        let half = Vec3::new(
            params.finger_thickness * 0.5,
            spec.jaw_width * 0.5,
            spec.jaw_depth * 0.5,
        );
        let mut collides = false;
        for side in [-1.0, 1.0] {
            let box_center = center + a * (side * (opening * 0.5 + params.finger_thickness * 0.5));
            if bvh.intersects_obb(mesh, &box_center, rot.matrix(), &half) {
                collides = true;
                break;
            }
        }
        if collides {
            continue;
        }
        let transform = Pose::from_parts(rot, center);
        if is_duplicate(&kept, &transform, params) {
            continue;
        }
        // Quality from the worst of the three alignment cosines.
        let worst_cos = n1.dot(&-n2).min(n1.dot(&-a)).min(n2.dot(&a));
        let quality = ((worst_cos - cos_cone) / (1.0 - cos_cone)).clamp(0.0, 1.0);
        kept.push(GraspPose {
            transform,
            gripper_id: spec.gripper_id.clone(),
            local_index: kept.len() as u32,
            quality_hint: quality,
        });
    }
    Ok(kept)
}

fn is_duplicate(kept: &[GraspPose], candidate: &Pose, params: &GenParams) -> bool {
    kept.iter().any(|g| {
        let dt = (g.transform.translation - candidate.translation).norm();
        if dt >= params.dedup_translation {
            return false;
        }
        let rel = g.transform.rotation.inverse() * candidate.rotation;
        rel.angle() < params.dedup_rotation
    })
}

/// Grasp pose in the world frame: `object_pose` composed with the grasp's
/// object-frame transform.
pub fn grasp_world_pose(object_pose: &Pose, g: &GraspPose) -> Pose {
    object_pose.compose(&g.transform)
}
