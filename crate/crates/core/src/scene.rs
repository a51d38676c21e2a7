//! Synthetic cluttered scenes: a bin, a camera, and objects settled into
//! the bin by a deterministic layered heuristic.
//!
//! Objects are dropped one at a time with uniformly random class and
//! orientation, then lowered along -z (bin frame) until the support test
//! fires: the object's mesh touches the bin floor, or its bounding sphere
//! rests on a previously placed object's bounding sphere. Poses are stored
//! in the camera frame with unified orientations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::geom::{Pose, Rotation, Vec3};
use crate::mesh::{shapes, TriangleMesh};
use crate::object::ObjectModel;
use crate::render::{self, DepthImage, RenderInstance, BIN_ID};
use crate::symmetry::unify_orientation;
use crate::{Error, Result};

/// Open-top bin. The bin frame origin sits at the center of the floor's
/// top surface; the interior spans `[-L/2, L/2] x [-W/2, W/2] x [0, H]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinSpec {
    pub inner_length: f64,
    pub inner_width: f64,
    pub inner_height: f64,
    pub wall_thickness: f64,
    pub pose: Pose,
}

impl BinSpec {
    pub fn validate(&self) -> Result<()> {
        if self.inner_length <= 0.0
            || self.inner_width <= 0.0
            || self.inner_height <= 0.0
            || self.wall_thickness <= 0.0
        {
            return Err(Error::invalid("bin dimensions must be positive"));
        }
        Ok(())
    }

    /// Floor slab plus four wall slabs (overlapping at corners).
    pub fn mesh(&self) -> TriangleMesh {
        let (l, w, h, t) = (
            self.inner_length,
            self.inner_width,
            self.inner_height,
            self.wall_thickness,
        );
        let floor = shapes::make_box(l + 2.0 * t, w + 2.0 * t, t)
            .translated(&Vec3::new(0.0, 0.0, -t / 2.0));
        let wall_x = shapes::make_box(t, w + 2.0 * t, h + t);
        let wall_y = shapes::make_box(l + 2.0 * t, t, h + t);
        let zc = (h - t) / 2.0;
        shapes::merge(&[
            floor,
            wall_x.translated(&Vec3::new((l + t) / 2.0, 0.0, zc)),
            wall_x.translated(&Vec3::new(-(l + t) / 2.0, 0.0, zc)),
            wall_y.translated(&Vec3::new(0.0, (w + t) / 2.0, zc)),
            wall_y.translated(&Vec3::new(0.0, -(w + t) / 2.0, zc)),
        ])
    }
}

/// One placed object. The pose is relative to the camera and already
/// orientation-unified for the object's symmetry class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneObject {
    pub instance_id: u32,
    pub class_id: u32,
    pub pose: Pose,
    pub visibility: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub camera: CameraModel,
    pub bin: BinSpec,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Render instances for this scene: the bin first, then the objects in
    /// instance order (the id buffer carries instance ids).
    pub fn render_instances<'a>(
        &'a self,
        library: &'a [ObjectModel],
        bin_mesh: &'a TriangleMesh,
    ) -> Vec<RenderInstance<'a>> {
        let view = self.camera.view();
        let mut out = Vec::with_capacity(self.objects.len() + 1);
        out.push(RenderInstance {
            mesh: bin_mesh,
            pose_cam: view.compose(&self.bin.pose),
            id: BIN_ID,
        });
        for obj in &self.objects {
            out.push(RenderInstance {
                mesh: &library[obj.class_id as usize].mesh,
                pose_cam: obj.pose,
                id: obj.instance_id as i32,
            });
        }
        out
    }

    /// Depth raster plus per-pixel front-most instance ids.
    pub fn render(&self, library: &[ObjectModel]) -> (DepthImage, Vec<i32>) {
        let bin_mesh = self.bin.mesh();
        let instances = self.render_instances(library, &bin_mesh);
        render::render_instances(&instances, &self.camera)
    }
}

/// Generates one scene with `drop_count` objects. Deterministic given the
/// seed. Fails with [`Error::Unsatisfiable`] when an object cannot be
/// placed inside the bin within `max_attempts` position draws.
pub fn generate_scene(
    library: &[ObjectModel],
    drop_count: usize,
    bin: &BinSpec,
    camera: &CameraModel,
    seed: u64,
    max_attempts: usize,
) -> Result<Scene> {
    bin.validate()?;
    camera.validate()?;
    if library.is_empty() {
        return Err(Error::invalid("object library is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (class, rotation, origin, sphere center, radius), all in the bin frame.
    struct Placed {
        class: usize,
        rotation: Rotation,
        origin: Vec3,
        center: Vec3,
        radius: f64,
    }
    let mut placed: Vec<Placed> = Vec::with_capacity(drop_count);
    for _ in 0..drop_count {
        let class = rng.random_range(0..library.len());
        let obj = &library[class];
        let radius = obj.diameter / 2.0;
        let pi = std::f64::consts::PI;
        let rotation = Rotation::from_euler_zyx(
            rng.random_range(-pi..pi),
            rng.random_range(-pi..pi),
            rng.random_range(-pi..pi),
        );
        let center_off = rotation * obj.bounding_center;
        let half_l = bin.inner_length / 2.0 - radius;
        let half_w = bin.inner_width / 2.0 - radius;
        if half_l <= 0.0 || half_w <= 0.0 {
            return Err(Error::Unsatisfiable(format!(
                "object class {} (diameter {:.3}) does not fit the bin",
                obj.class_id, obj.diameter
            )));
        }
        let mut chosen = None;
        for _ in 0..max_attempts.max(1) {
            let cx = rng.random_range(-half_l..half_l);
            let cy = rng.random_range(-half_w..half_w);
            // Sphere center stays inside the wall-inflated interior by
            // construction; the draw loop exists for future rejection rules
            // and mirrors the resample-on-reject contract.
            chosen = Some((cx, cy));
            break;
        }
        let Some((cx, cy)) = chosen else {
            return Err(Error::Unsatisfiable("no admissible position found".into()));
        };
        // Support height: floor contact via the lowest mesh point, object
        // contacts via bounding spheres.
        let min_z = obj.mesh.min_rotated_z(&rotation);
        let mut origin_z = -min_z; // floor top is z = 0
        for p in &placed {
            let dx = cx + center_off.x - p.center.x;
            let dy = cy + center_off.y - p.center.y;
            let d_xy = dx.hypot(dy);
            let reach = radius + p.radius;
            if d_xy < reach {
                let dz = (reach * reach - d_xy * d_xy).sqrt();
                let center_z = p.center.z + dz;
                origin_z = origin_z.max(center_z - center_off.z);
            }
        }
        let origin = Vec3::new(cx, cy, origin_z);
        placed.push(Placed {
            class,
            rotation,
            origin,
            center: origin + center_off,
            radius,
        });
    }
    let view = camera.view();
    let objects: Vec<SceneObject> = placed
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let world = bin
                .pose
                .compose(&Pose::from_parts(p.rotation, p.origin));
            let cam_pose = view.compose(&world);
            let unified = unify_orientation(&cam_pose, &library[p.class].symmetry);
            SceneObject {
                instance_id: i as u32,
                class_id: library[p.class].class_id,
                pose: unified,
                visibility: 0.0,
            }
        })
        .collect();
    let mut scene = Scene {
        camera: camera.clone(),
        bin: bin.clone(),
        objects,
    };
    // Visibility from the composite render vs solo footprints.
    let bin_mesh = scene.bin.mesh();
    let instances = scene.render_instances(library, &bin_mesh);
    let (_, ids) = render::render_instances(&instances, &scene.camera);
    let vis = render::compute_visibility(&instances, &ids, &scene.camera);
    for (obj, v) in scene.objects.iter_mut().zip(vis) {
        obj.visibility = v;
    }
    Ok(scene)
}

/// Default desk-scale setup: a 28 x 28 cm bin under a downward-looking
/// 128 x 128 camera.
pub fn default_bin() -> BinSpec {
    BinSpec {
        inner_length: 0.28,
        inner_width: 0.28,
        inner_height: 0.12,
        wall_thickness: 0.01,
        pose: Pose::identity(),
    }
}

pub fn default_camera() -> CameraModel {
    CameraModel {
        width: 128,
        height: 128,
        fx: 250.0,
        fy: 250.0,
        cx: 64.0,
        cy: 64.0,
        near: 0.4,
        far: 1.2,
        // 0.9 m above the bin floor, looking straight down. The camera x
        // axis matches world x; y and z are flipped.
        pose: Pose::from_parts(
            Rotation::rot_x(std::f64::consts::PI),
            Vec3::new(0.0, 0.0, 0.9),
        ),
    }
}
