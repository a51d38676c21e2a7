//! Software depth rendering: a perspective z-buffer rasterizer plus the
//! depth raster file format.
//!
//! Depth is the distance along the camera optical axis (not ray length),
//! matching the linear near/far normalization. Rendering is sequential and
//! bit-deterministic for a fixed instance order.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::camera::CameraModel;
use crate::geom::{Pose, Vec3};
use crate::mesh::TriangleMesh;
use crate::{Error, Result};

pub const BACKGROUND_ID: i32 = -1;
pub const BIN_ID: i32 = -2;

/// Metric depth raster; `+inf` marks pixels no geometry covered.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new_empty(width: u32, height: u32) -> Self {
        DepthImage {
            width,
            height,
            data: vec![f64::INFINITY; (width * height) as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    /// Maps depth linearly to `[-1, 1]`: near -> -1, far -> +1. Values are
    /// clipped to `[near, far]` first; the no-hit sentinel maps to +1.
    pub fn normalize(&self, camera: &CameraModel) -> Vec<f64> {
        self.normalize_range(camera.near, camera.far)
    }

    pub fn normalize_range(&self, near: f64, far: f64) -> Vec<f64> {
        let span = far - near;
        self.data
            .iter()
            .map(|&d| {
                if d.is_finite() {
                    // Division keeps the endpoints exact: near -> -1, far -> +1.
                    (d.clamp(near, far) - near) / span * 2.0 - 1.0
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Writes the `DPH1` format: magic, u32 LE width and height, then
    /// row-major f32 LE values (top-left origin).
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"DPH1")?;
        w.write_u32::<LittleEndian>(self.width)?;
        w.write_u32::<LittleEndian>(self.height)?;
        for &d in &self.data {
            w.write_f32::<LittleEndian>(d as f32)?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("depth raster: truncated magic"))?;
        if &magic != b"DPH1" {
            return Err(Error::format("depth raster: bad magic bytes"));
        }
        let width = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("depth raster: truncated header"))?;
        let height = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("depth raster: truncated header"))?;
        let n = (width as usize) * (height as usize);
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from(
                r.read_f32::<LittleEndian>()
                    .map_err(|_| Error::format("depth raster: truncated payload"))?,
            ));
        }
        Ok(DepthImage {
            width,
            height,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut f)
    }
}

/// One mesh to draw, already posed in the camera frame.
pub struct RenderInstance<'a> {
    pub mesh: &'a TriangleMesh,
    pub pose_cam: Pose,
    pub id: i32,
}

/// Rasterizes all instances in order, returning the depth raster and a
/// per-pixel id buffer (front-most instance id, [`BACKGROUND_ID`] where
/// nothing was drawn). Draw order breaks exact depth ties, so the output is
/// deterministic.
pub fn render_instances(
    instances: &[RenderInstance<'_>],
    camera: &CameraModel,
) -> (DepthImage, Vec<i32>) {
    let mut depth = DepthImage::new_empty(camera.width, camera.height);
    let mut ids = vec![BACKGROUND_ID; (camera.width * camera.height) as usize];
    for inst in instances {
        rasterize_mesh(&mut depth, &mut ids, inst, camera);
    }
    (depth, ids)
}

fn rasterize_mesh(
    depth: &mut DepthImage,
    ids: &mut [i32],
    inst: &RenderInstance<'_>,
    camera: &CameraModel,
) {
    let verts_cam: Vec<Vec3> = inst
        .mesh
        .vertices()
        .iter()
        .map(|v| inst.pose_cam.transform_point(v))
        .collect();
    let mut poly = Vec::with_capacity(4);
    for tri in inst.mesh.triangles() {
        poly.clear();
        poly.extend(tri.iter().map(|&i| verts_cam[i as usize]));
        clip_near(&mut poly, camera.near);
        // Fan-triangulate the clipped polygon (3 or 4 vertices).
        for k in 1..poly.len().saturating_sub(1) {
            raster_triangle(depth, ids, inst.id, camera, &poly[0], &poly[k], &poly[k + 1]);
        }
    }
}

/// Clips a camera-space polygon against `z >= near`.
fn clip_near(poly: &mut Vec<Vec3>, near: f64) {
    if poly.iter().all(|p| p.z >= near) {
        return;
    }
    let input = poly.clone();
    poly.clear();
    for i in 0..input.len() {
        let a = input[i];
        let b = input[(i + 1) % input.len()];
        let (fa, fb) = (a.z - near, b.z - near);
        if fa >= 0.0 {
            poly.push(a);
        }
        if (fa > 0.0 && fb < 0.0) || (fa < 0.0 && fb > 0.0) {
            let t = fa / (fa - fb);
            poly.push(a + (b - a) * t);
        }
    }
}

fn raster_triangle(
    depth: &mut DepthImage,
    ids: &mut [i32],
    id: i32,
    camera: &CameraModel,
    a: &Vec3,
    b: &Vec3,
    c: &Vec3,
) {
    let pa = screen(camera, a);
    let pb = screen(camera, b);
    let pc = screen(camera, c);
    let mut v = [pa, pb, pc];
    let area = edge(&v[0], &v[1], &v[2]);
    if area == 0.0 {
        return;
    }
    if area < 0.0 {
        v.swap(1, 2);
    }
    let area = edge(&v[0], &v[1], &v[2]);
    let min_x = v.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = v.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = v.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (min_x - 0.5).floor().max(0.0) as i64;
    let x1 = (max_x - 0.5).ceil().min(camera.width as f64 - 1.0) as i64;
    let y0 = (min_y - 0.5).floor().max(0.0) as i64;
    let y1 = (max_y - 0.5).ceil().min(camera.height as f64 - 1.0) as i64;
    if x1 < x0 || y1 < y0 {
        return;
    }
    let inv_area = 1.0 / area;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let p = (px as f64 + 0.5, py as f64 + 0.5, 0.0);
            let w0 = edge(&v[1], &v[2], &p);
            let w1 = edge(&v[2], &v[0], &p);
            let w2 = edge(&v[0], &v[1], &p);
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // 1/z interpolates linearly in screen space.
            let inv_z = (w0 * v[0].2 + w1 * v[1].2 + w2 * v[2].2) * inv_area;
            if inv_z <= 0.0 {
                continue;
            }
            let z = 1.0 / inv_z;
            let idx = (py as u32 * camera.width + px as u32) as usize;
            if z < depth.data[idx] {
                depth.data[idx] = z;
                ids[idx] = id;
            }
        }
    }
}

#[inline]
fn screen(camera: &CameraModel, p: &Vec3) -> (f64, f64, f64) {
    let (u, v) = camera.project(p);
    (u, v, 1.0 / p.z)
}

#[inline]
fn edge(a: &(f64, f64, f64), b: &(f64, f64, f64), p: &(f64, f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Visibility of each instance: front-most pixel count in the composite
/// render divided by the instance's solo footprint. `ids` must come from
/// [`render_instances`] over exactly `instances`.
pub fn compute_visibility(
    instances: &[RenderInstance<'_>],
    ids: &[i32],
    camera: &CameraModel,
) -> Vec<f64> {
    let mut front = std::collections::HashMap::new();
    for &id in ids {
        if id >= 0 {
            *front.entry(id).or_insert(0usize) += 1;
        }
    }
    instances
        .iter()
        .filter(|inst| inst.id >= 0)
        .map(|inst| {
            let solo = {
                let (img, _) = render_instances(std::slice::from_ref(inst), camera);
                img.data.iter().filter(|d| d.is_finite()).count()
            };
            if solo == 0 {
                0.0
            } else {
                let f = front.get(&inst.id).copied().unwrap_or(0);
                f as f64 / solo as f64
            }
        })
        .collect()
}
