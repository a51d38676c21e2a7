//! Proxy grasp/placement labeling.
//!
//! Physical grasping and placement trials are replaced by a deterministic
//! oracle with plausible structure: a grasp executes only when its access
//! cylinder is free of other objects and bin walls, and the logged
//! placement distance grows with the grasp's offset from the object's
//! centroid and with occlusion. Entanglement-prone (hook-like) objects in
//! contact can render grasps entangled. Non-executed and entangled grasps
//! are labeled with the clipping ceiling `d_max`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::geom::{Pose, Vec3};
use crate::grasp::{grasp_world_pose, GraspSet};
use crate::object::ObjectModel;
use crate::render::DepthImage;
use crate::scene::Scene;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Distance floor for a clean, centered grasp.
    pub base: f64,
    /// Weight on the grasp's offset from the surface centroid (relative to
    /// the object diameter).
    pub w_cm: f64,
    /// Weight on occlusion `(1 - v)`.
    pub w_occ: f64,
    /// Gaussian label noise.
    pub noise_sigma: f64,
    /// Per-grasp entanglement probability for qualifying objects.
    pub p_ent: f64,
    /// Clipping ceiling and sentinel for failed grasps.
    pub d_max: f64,
    /// Access cylinder radius and length along the approach direction.
    pub access_radius: f64,
    pub access_length: f64,
    /// Bounding spheres closer than `r_i + r_j + ent_margin` count as
    /// touching for entanglement qualification (settling produces exact
    /// tangency, so a pure overlap test would never fire).
    pub ent_margin: f64,
    /// Placement target pose (world frame).
    pub target_pose: Pose,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            base: 0.1,
            w_cm: 0.6,
            w_occ: 1.0,
            noise_sigma: 0.05,
            p_ent: 0.5,
            d_max: 1.0,
            access_radius: 0.01,
            access_length: 0.12,
            ent_margin: 0.001,
            target_pose: Pose::identity(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraspRecord {
    /// Global grasp index within the object's class (gripper blocks
    /// concatenated in registry order).
    pub k: u32,
    pub executed: bool,
    pub d_p: f64,
    pub entangled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementAnnotation {
    pub instance_id: u32,
    pub target_pose: Pose,
    pub records: Vec<GraspRecord>,
}

/// Labels every grasp of every object in the scene.
///
/// `grasp_sets` must be indexed by class id. `depth`/`ids` are the scene's
/// composite render (used for the occlusion test). Deterministic given the
/// seed.
pub fn annotate_placements(
    scene: &Scene,
    library: &[ObjectModel],
    grasp_sets: &[GraspSet],
    depth: &DepthImage,
    ids: &[i32],
    params: &OracleParams,
    seed: u64,
) -> Result<Vec<PlacementAnnotation>> {
    let bin_mesh = scene.bin.mesh();
    let bin_bvh = Bvh::build(&bin_mesh);
    let cam_to_bin = scene.bin.pose.inverse().compose(&scene.camera.pose);
    let noise = Normal::new(0.0, params.noise_sigma.max(0.0))
        .map_err(|e| Error::invalid(format!("oracle noise: {e}")))?;

    // Entanglement qualification per object: hook-like and touching another
    // hook-like object's bounding sphere.
    let qualifies: Vec<bool> = scene
        .objects
        .iter()
        .map(|a| {
            let ma = &library[a.class_id as usize];
            if !ma.hook_like {
                return false;
            }
            let ca = a.pose.transform_point(&ma.bounding_center);
            scene.objects.iter().any(|b| {
                if b.instance_id == a.instance_id {
                    return false;
                }
                let mb = &library[b.class_id as usize];
                if !mb.hook_like {
                    return false;
                }
                let cb = b.pose.transform_point(&mb.bounding_center);
                (ca - cb).norm() < (ma.diameter + mb.diameter) / 2.0 + params.ent_margin
            })
        })
        .collect();

    let mut out = Vec::with_capacity(scene.objects.len());
    for (oi, obj) in scene.objects.iter().enumerate() {
        let model = &library[obj.class_id as usize];
        let set = grasp_sets
            .get(obj.class_id as usize)
            .filter(|s| s.class_id == obj.class_id)
            .ok_or_else(|| {
                Error::config(format!("no grasp set for class {}", obj.class_id))
            })?;
        let mut records = Vec::with_capacity(set.total());
        for (k, grasp) in set.iter_flat() {
            let world = grasp_world_pose(&obj.pose, grasp); // camera frame
            let contact = world.translation;
            // Approach: gripper body extends opposite the grasp z-axis.
            let approach_out = -(world.rotation * Vec3::z());
            let occluded = cylinder_sees_other_object(
                scene,
                depth,
                ids,
                obj.instance_id as i32,
                &contact,
                &approach_out,
                params.access_radius,
                params.access_length,
            );
            let bin_blocked = {
                let p0 = cam_to_bin.transform_point(&contact);
                let axis = cam_to_bin.rotation * approach_out;
                bin_bvh.intersects_cylinder(
                    &bin_mesh,
                    &p0,
                    &axis,
                    params.access_radius,
                    0.0,
                    params.access_length,
                )
            };
            let executed = !occluded && !bin_blocked;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                "oracle",
                ((obj.instance_id as u64) << 32) | k as u64,
            ));
            let eps: f64 = noise.sample(&mut rng);
            let entangled = qualifies[oi] && rng.random::<f64>() < params.p_ent;
            let d_p = if !executed || entangled {
                params.d_max
            } else {
                let offset = grasp.transform.translation.norm() / model.diameter;
                (params.base + params.w_cm * offset + params.w_occ * (1.0 - obj.visibility)
                    + eps)
                    .clamp(0.0, params.d_max)
            };
            records.push(GraspRecord {
                k: k as u32,
                executed,
                d_p,
                entangled,
            });
        }
        out.push(PlacementAnnotation {
            instance_id: obj.instance_id,
            target_pose: params.target_pose,
            records,
        });
    }
    Ok(out)
}

/// True when any rendered pixel of another object unprojects into the
/// access cylinder starting at `contact` and extending along `axis`.
#[allow(clippy::too_many_arguments)]
fn cylinder_sees_other_object(
    scene: &Scene,
    depth: &DepthImage,
    ids: &[i32],
    self_id: i32,
    contact: &Vec3,
    axis: &Vec3,
    radius: f64,
    length: f64,
) -> bool {
    let cam = &scene.camera;
    // Conservative projected bounds from the two endpoint discs.
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for &t in &[0.0, length] {
        let e = contact + axis * t;
        if e.z <= cam.near * 0.5 {
            // Endpoint at or behind the camera: fall back to the full image.
            min_u = 0.0;
            max_u = cam.width as f64;
            min_v = 0.0;
            max_v = cam.height as f64;
            break;
        }
        let (u, v) = cam.project(&e);
        let ru = radius * cam.fx / e.z + 1.0;
        let rv = radius * cam.fy / e.z + 1.0;
        min_u = min_u.min(u - ru);
        max_u = max_u.max(u + ru);
        min_v = min_v.min(v - rv);
        max_v = max_v.max(v + rv);
    }
    let x0 = min_u.floor().max(0.0) as u32;
    let x1 = (max_u.ceil() as i64).clamp(0, cam.width as i64) as u32;
    let y0 = min_v.floor().max(0.0) as u32;
    let y1 = (max_v.ceil() as i64).clamp(0, cam.height as i64) as u32;
    for py in y0..y1 {
        for px in x0..x1 {
            let idx = (py * cam.width + px) as usize;
            let id = ids[idx];
            if id < 0 || id == self_id {
                continue;
            }
            let d = depth.data[idx];
            if !d.is_finite() {
                continue;
            }
            let q = cam.unproject(px, py, d);
            let rel = q - contact;
            let s = rel.dot(axis);
            if !(0.0..=length).contains(&s) {
                continue;
            }
            let radial2 = (rel - axis * s).norm_squared();
            if radial2 <= radius * radius {
                return true;
            }
        }
    }
    false
}
