//! Triangle meshes: construction, file I/O, surface sampling, and bounding
//! geometry.
//!
//! Meshes are plain indexed triangle soups in meters. Per-triangle unit
//! normals follow the winding order of the triangle.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{Rotation, Vec3};
use crate::{Error, Result};

/// Triangles with an area below this threshold (in square meters) are
/// rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    cumulative_areas: Vec<f64>,
}

impl TriangleMesh {
    /// Builds a mesh, computing per-triangle normals and areas.
    ///
    /// Rejects out-of-range indices and degenerate triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::invalid("mesh has no vertices or no triangles"));
        }
        let n = vertices.len() as u32;
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut cumulative_areas = Vec::with_capacity(triangles.len());
        let mut acc = 0.0;
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!(
                    "triangle {i} references vertex out of range"
                )));
            }
            let [a, b, c] = [
                vertices[t[0] as usize],
                vertices[t[1] as usize],
                vertices[t[2] as usize],
            ];
            let cross = (b - a).cross(&(c - a));
            let doubled = cross.norm();
            let area = 0.5 * doubled;
            if area <= MIN_TRIANGLE_AREA {
                return Err(Error::invalid(format!(
                    "triangle {i} is degenerate (area {area:.3e} m^2)"
                )));
            }
            normals.push(cross / doubled);
            areas.push(area);
            acc += area;
            cumulative_areas.push(acc);
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
            normals,
            areas,
            cumulative_areas,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn triangle_vertices(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn total_area(&self) -> f64 {
        *self.cumulative_areas.last().unwrap()
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_vertices(i);
            acc += (a + b + c) / 3.0 * self.areas[i];
        }
        acc / self.total_area()
    }

    /// Returns a copy translated by `offset`.
    pub fn translated(&self, offset: &Vec3) -> TriangleMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v += offset;
        }
        out
    }

    /// Returns a copy with every vertex scaled about the origin.
    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v *= factor;
        }
        for a in &mut out.areas {
            *a *= factor * factor;
        }
        for a in &mut out.cumulative_areas {
            *a *= factor * factor;
        }
        out
    }

    /// Minimum z over all vertices after applying `rotation`.
    pub fn min_rotated_z(&self, rotation: &Rotation) -> f64 {
        let row = rotation.matrix().row(2);
        self.vertices
            .iter()
            .map(|v| row[0] * v.x + row[1] * v.y + row[2] * v.z)
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples `n` points uniformly by surface area, together with the
    /// normal of the triangle each point lies on. Deterministic given the
    /// seed.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<Vec<(Vec3, Vec3)>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = self.total_area();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.random_range(0.0..total);
            let idx = match self
                .cumulative_areas
                .binary_search_by(|probe| probe.partial_cmp(&target).unwrap())
            {
                Ok(i) => (i + 1).min(self.triangles.len() - 1),
                Err(i) => i.min(self.triangles.len() - 1),
            };
            let [a, b, c] = self.triangle_vertices(idx);
            // Uniform barycentric sampling via square-root trick.
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let s = r1.sqrt();
            let point = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
            out.push((point, self.normals[idx]));
        }
        Ok(out)
    }

    /// Axis-aligned bounds of the vertex set.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Exact smallest enclosing sphere of the vertex set (center, radius).
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        smallest_enclosing_sphere(&self.vertices)
    }

    pub fn write_obj(&self, w: &mut impl Write) -> Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_obj(&mut f)
    }

    /// Loads a mesh from OBJ or binary STL, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::format(format!("cannot open mesh {}: {e}", path.display())))?;
        match ext.as_str() {
            "obj" => Self::read_obj(BufReader::new(file)),
            "stl" => Self::read_stl_binary(BufReader::new(file)),
            other => Err(Error::format(format!(
                "unsupported mesh extension '{other}' (expected obj or stl)"
            ))),
        }
    }

    /// Parses Wavefront OBJ. Polygonal faces are fan-triangulated; texture
    /// and normal indices are ignored (normals are recomputed from winding).
    pub fn read_obj(r: impl BufRead) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut coord = [0.0f64; 3];
                    for c in &mut coord {
                        *c = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                            Error::format(format!("obj line {}: bad vertex", lineno + 1))
                        })?;
                    }
                    vertices.push(Vec3::new(coord[0], coord[1], coord[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|p| {
                            let first = p.split('/').next().unwrap_or(p);
                            first.parse::<i64>().ok().and_then(|i| {
                                // OBJ indices are 1-based; negatives count from the end.
                                let n = vertices.len() as i64;
                                let v = if i < 0 { n + i } else { i - 1 };
                                u32::try_from(v).ok()
                            })
                        })
                        .collect::<Option<Vec<u32>>>()
                        .ok_or_else(|| {
                            Error::format(format!("obj line {}: bad face", lineno + 1))
                        })?;
                    if idx.len() < 3 {
                        return Err(Error::format(format!(
                            "obj line {}: face with fewer than 3 vertices",
                            lineno + 1
                        )));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Parses binary STL. Vertices are not welded.
    pub fn read_stl_binary(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; 80];
        r.read_exact(&mut header)
            .map_err(|_| Error::format("stl: truncated header"))?;
        let count = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format("stl: missing triangle count"))?;
        let mut vertices = Vec::with_capacity(count as usize * 3);
        let mut triangles = Vec::with_capacity(count as usize);
        for i in 0..count {
            let mut rec = [0f32; 12];
            for v in &mut rec {
                *v = r
                    .read_f32::<LittleEndian>()
                    .map_err(|_| Error::format(format!("stl: truncated triangle {i}")))?;
            }
            let _attr = r
                .read_u16::<LittleEndian>()
                .map_err(|_| Error::format(format!("stl: truncated triangle {i}")))?;
            let base = vertices.len() as u32;
            for k in 0..3 {
                vertices.push(Vec3::new(
                    f64::from(rec[3 + 3 * k]),
                    f64::from(rec[4 + 3 * k]),
                    f64::from(rec[5 + 3 * k]),
                ));
            }
            triangles.push([base, base + 1, base + 2]);
        }
        TriangleMesh::new(vertices, triangles)
    }
}

/// Exact smallest enclosing sphere (Welzl's algorithm, move-to-front
/// incremental form). Deterministic: the interior shuffle uses a fixed seed.
pub fn smallest_enclosing_sphere(points: &[Vec3]) -> (Vec3, f64) {
    assert!(!points.is_empty(), "no points");
    let mut pts: Vec<Vec3> = points.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    // Fisher-Yates with a fixed seed keeps expected linear time while
    // staying reproducible.
    for i in (1..pts.len()).rev() {
        let j = rng.random_range(0..=i);
        pts.swap(i, j);
    }
    let (c, r2) = sphere_with_boundary(&mut pts, &mut Vec::new());
    (c, r2.sqrt())
}

const SPHERE_EPS: f64 = 1e-12;

fn inside(c: &Vec3, r2: f64, p: &Vec3) -> bool {
    (p - c).norm_squared() <= r2 * (1.0 + 1e-10) + SPHERE_EPS
}

fn sphere_with_boundary(pts: &mut [Vec3], boundary: &mut Vec<Vec3>) -> (Vec3, f64) {
    let (mut c, mut r2) = trivial_sphere(boundary);
    if boundary.len() == 4 {
        return (c, r2);
    }
    for i in 0..pts.len() {
        let p = pts[i];
        if !inside(&c, r2, &p) {
            boundary.push(p);
            let (nc, nr2) = sphere_with_boundary(&mut pts[..i], boundary);
            boundary.pop();
            c = nc;
            r2 = nr2;
            // Move-to-front keeps the expected recursion shallow.
            pts[..=i].rotate_right(1);
        }
    }
    (c, r2)
}

fn trivial_sphere(b: &[Vec3]) -> (Vec3, f64) {
    match b.len() {
        0 => (Vec3::zeros(), 0.0),
        1 => (b[0], 0.0),
        2 => {
            let c = (b[0] + b[1]) * 0.5;
            (c, (b[0] - c).norm_squared())
        }
        3 => circumsphere3(&b[0], &b[1], &b[2]),
        4 => circumsphere4(&b[0], &b[1], &b[2], &b[3]),
        _ => unreachable!(),
    }
}

/// Smallest sphere through three points (their circumcircle; degenerate
/// cases fall back to the widest pair).
fn circumsphere3(a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, f64) {
    let ab = b - a;
    let ac = c - a;
    let n = ab.cross(&ac);
    let n2 = n.norm_squared();
    if n2 < 1e-24 {
        // Collinear: use the two farthest points as a diameter.
        let pairs = [(*a, *b), (*a, *c), (*b, *c)];
        let (p, q) = pairs
            .iter()
            .max_by(|x, y| {
                let dx = (x.0 - x.1).norm_squared();
                let dy = (y.0 - y.1).norm_squared();
                dx.partial_cmp(&dy).unwrap()
            })
            .copied()
            .unwrap();
        let center = (p + q) * 0.5;
        return (center, (p - center).norm_squared());
    }
    let rel = (n.cross(&ab) * ac.norm_squared() + ac.cross(&n) * ab.norm_squared()) / (2.0 * n2);
    let center = a + rel;
    (center, rel.norm_squared())
}

/// Sphere through four points; falls back to three-point spheres when the
/// tetrahedron is (near-)degenerate.
fn circumsphere4(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> (Vec3, f64) {
    let m = nalgebra::Matrix3::from_rows(&[
        (b - a).transpose(),
        (c - a).transpose(),
        (d - a).transpose(),
    ]);
    let rhs = Vec3::new(
        0.5 * (b - a).norm_squared(),
        0.5 * (c - a).norm_squared(),
        0.5 * (d - a).norm_squared(),
    );
    match m.lu().solve(&rhs) {
        Some(rel) if rel.iter().all(|v| v.is_finite()) => {
            let center = a + rel;
            (center, rel.norm_squared())
        }
        _ => {
            // Degenerate: take the largest of the 3-point spheres.
            let candidates = [
                circumsphere3(a, b, c),
                circumsphere3(a, b, d),
                circumsphere3(a, c, d),
                circumsphere3(b, c, d),
            ];
            candidates
                .into_iter()
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap()
        }
    }
}

/// Primitive mesh constructors used by tests, demos, and synthetic object
/// libraries.
pub mod shapes {
    use super::*;

    /// Axis-aligned box centered at the origin.
    pub fn make_box(size_x: f64, size_y: f64, size_z: f64) -> TriangleMesh {
        let h = Vec3::new(size_x * 0.5, size_y * 0.5, size_z * 0.5);
        let corners: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
            })
            .collect();
        // Outward-facing winding per face.
        let faces: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let mut triangles = Vec::new();
        for f in faces {
            triangles.push([f[0], f[1], f[2]]);
            triangles.push([f[0], f[2], f[3]]);
        }
        TriangleMesh::new(corners, triangles).expect("box is valid")
    }

    /// UV-sphere centered at the origin.
    pub fn make_sphere(radius: f64, rings: usize, segments: usize) -> TriangleMesh {
        assert!(rings >= 2 && segments >= 3);
        let mut vertices = vec![Vec3::new(0.0, 0.0, radius)];
        for ri in 1..rings {
            let phi = std::f64::consts::PI * ri as f64 / rings as f64;
            for si in 0..segments {
                let theta = 2.0 * std::f64::consts::PI * si as f64 / segments as f64;
                vertices.push(Vec3::new(
                    radius * phi.sin() * theta.cos(),
                    radius * phi.sin() * theta.sin(),
                    radius * phi.cos(),
                ));
            }
        }
        vertices.push(Vec3::new(0.0, 0.0, -radius));
        let bottom = vertices.len() as u32 - 1;
        let ring = |ri: usize, si: usize| 1 + ((ri - 1) * segments + si % segments) as u32;
        let mut triangles = Vec::new();
        for si in 0..segments {
            triangles.push([0, ring(1, si), ring(1, si + 1)]);
            triangles.push([bottom, ring(rings - 1, si + 1), ring(rings - 1, si)]);
        }
        for ri in 1..rings - 1 {
            for si in 0..segments {
                let a = ring(ri, si);
                let b = ring(ri, si + 1);
                let c = ring(ri + 1, si);
                let d = ring(ri + 1, si + 1);
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        TriangleMesh::new(vertices, triangles).expect("sphere is valid")
    }

    /// Closed cylinder along z, centered at the origin.
    pub fn make_cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
        assert!(segments >= 3);
        let hz = height * 0.5;
        let mut vertices = Vec::new();
        for &z in &[-hz, hz] {
            for si in 0..segments {
                let theta = 2.0 * std::f64::consts::PI * si as f64 / segments as f64;
                vertices.push(Vec3::new(radius * theta.cos(), radius * theta.sin(), z));
            }
        }
        let top_center = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, 0.0, hz));
        let bottom_center = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, 0.0, -hz));
        let lower = |s: usize| (s % segments) as u32;
        let upper = |s: usize| (segments + s % segments) as u32;
        let mut triangles = Vec::new();
        for s in 0..segments {
            // Side quad, outward winding.
            triangles.push([lower(s), lower(s + 1), upper(s + 1)]);
            triangles.push([lower(s), upper(s + 1), upper(s)]);
            // Caps.
            triangles.push([top_center, upper(s), upper(s + 1)]);
            triangles.push([bottom_center, lower(s + 1), lower(s)]);
        }
        TriangleMesh::new(vertices, triangles).expect("cylinder is valid")
    }

    /// Cone with its base at `z = -height/2` and apex at `z = +height/2`.
    pub fn make_cone(radius: f64, height: f64, segments: usize) -> TriangleMesh {
        assert!(segments >= 3);
        let hz = height * 0.5;
        let mut vertices = Vec::new();
        for si in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * si as f64 / segments as f64;
            vertices.push(Vec3::new(radius * theta.cos(), radius * theta.sin(), -hz));
        }
        let apex = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, 0.0, hz));
        let base_center = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, 0.0, -hz));
        let ring = |s: usize| (s % segments) as u32;
        let mut triangles = Vec::new();
        for s in 0..segments {
            triangles.push([apex, ring(s), ring(s + 1)]);
            triangles.push([base_center, ring(s + 1), ring(s)]);
        }
        TriangleMesh::new(vertices, triangles).expect("cone is valid")
    }

    /// L-shaped bracket built from two boxes; a simple hook-prone geometry.
    pub fn make_l_bracket(leg: f64, width: f64, thickness: f64) -> TriangleMesh {
        let a = make_box(leg, width, thickness);
        let b = make_box(thickness, width, leg).translated(&Vec3::new(
            -(leg - thickness) * 0.5,
            0.0,
            (leg - thickness) * 0.5,
        ));
        merge(&[a, b])
    }

    /// Concatenates meshes into one (no welding).
    pub fn merge(meshes: &[TriangleMesh]) -> TriangleMesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in meshes {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(m.vertices());
            triangles.extend(
                m.triangles()
                    .iter()
                    .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
            );
        }
        TriangleMesh::new(vertices, triangles).expect("merged mesh is valid")
    }

    /// Single-sided unit square in the x-y plane, normal +z, corner at the
    /// origin. Handy as the smallest sampling test case.
    pub fn make_unit_square() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .expect("square is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_empty_and_degenerate() {
        assert!(TriangleMesh::new(vec![], vec![]).is_err());
        let verts = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        assert!(TriangleMesh::new(verts.clone(), vec![[0, 1, 2]]).is_err());
        assert!(TriangleMesh::new(verts, vec![[0, 1, 5]]).is_err());
    }

    #[test]
    fn normals_are_unit_and_outward_for_box() {
        let m = shapes::make_box(0.04, 0.02, 0.01);
        for (i, n) in m.normals().iter().enumerate() {
            assert_abs_diff_eq!(n.norm(), 1.0, epsilon = 1e-12);
            // Outward: normal points away from the origin for a centered box.
            let [a, b, c] = m.triangle_vertices(i);
            let centroid = (a + b + c) / 3.0;
            assert!(n.dot(&centroid) > 0.0, "triangle {i} winds inward");
        }
    }

    #[test]
    fn unit_square_sampling_splits_evenly() {
        // Two equal-area triangles: counts should match a fair binomial
        // within 3 sigma (sigma = sqrt(n/4)).
        let m = shapes::make_unit_square();
        let n = 10_000;
        let samples = m.sample_surface(n, 99).unwrap();
        let in_lower = samples
            .iter()
            .filter(|(p, _)| p.y <= p.x) // lower triangle of the square
            .count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            ((in_lower as f64) - (n as f64 / 2.0)).abs() <= 3.0 * sigma,
            "split {in_lower} of {n}"
        );
    }

    #[test]
    fn sampling_is_deterministic_and_sized() {
        let m = shapes::make_box(0.04, 0.02, 0.01);
        let one = m.sample_surface(1, 7).unwrap();
        assert_eq!(one.len(), 1);
        let a = m.sample_surface(500, 7).unwrap();
        let b = m.sample_surface(500, 7).unwrap();
        assert_eq!(a.len(), 500);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
        }
    }

    #[test]
    fn samples_lie_on_box_surface() {
        let m = shapes::make_box(0.04, 0.02, 0.01);
        for (p, _) in m.sample_surface(2000, 3).unwrap() {
            let on_x = (p.x.abs() - 0.02).abs() < 1e-12;
            let on_y = (p.y.abs() - 0.01).abs() < 1e-12;
            let on_z = (p.z.abs() - 0.005).abs() < 1e-12;
            assert!(on_x || on_y || on_z);
        }
    }

    #[test]
    fn bounding_sphere_of_box_is_half_diagonal() {
        let m = shapes::make_box(0.04, 0.02, 0.01);
        let (c, r) = m.bounding_sphere();
        let expect = (0.02f64.powi(2) + 0.01f64.powi(2) + 0.005f64.powi(2)).sqrt();
        assert!(c.norm() < 1e-9);
        assert_abs_diff_eq!(r, expect, epsilon = 1e-9);
        // Containment.
        for v in m.vertices() {
            assert!((v - c).norm() <= r + 1e-9);
        }
    }

    #[test]
    fn bounding_sphere_of_sphere_mesh() {
        let m = shapes::make_sphere(0.05, 16, 24);
        let (c, r) = m.bounding_sphere();
        assert!(c.norm() < 1e-9);
        assert_abs_diff_eq!(r, 0.05, epsilon = 1e-9);
    }

    #[test]
    fn bounding_sphere_scales_linearly() {
        let m = shapes::make_box(0.04, 0.02, 0.01);
        let (_, r1) = m.bounding_sphere();
        let (_, r2) = m.scaled(2.0).bounding_sphere();
        assert_abs_diff_eq!(r2, 2.0 * r1, epsilon = 1e-12);
    }

    #[test]
    fn obj_round_trip() {
        let m = shapes::make_cylinder(0.01, 0.05, 12);
        let mut buf = Vec::new();
        m.write_obj(&mut buf).unwrap();
        let back = TriangleMesh::read_obj(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(m.vertices().len(), back.vertices().len());
        assert_eq!(m.triangles(), back.triangles());
    }

    #[test]
    fn obj_quad_faces_are_triangulated() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let m = TriangleMesh::read_obj(std::io::Cursor::new(src)).unwrap();
        assert_eq!(m.triangles().len(), 2);
    }

    #[test]
    fn stl_round_trip() {
        let m = shapes::make_box(0.02, 0.02, 0.02);
        // Hand-rolled binary STL writer for the test.
        let mut bytes = vec![0u8; 80];
        bytes.extend_from_slice(&(m.triangles().len() as u32).to_le_bytes());
        for i in 0..m.triangles().len() {
            let n = m.normals()[i];
            for v in [n.x, n.y, n.z] {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for v in m.triangle_vertices(i) {
                for c in [v.x, v.y, v.z] {
                    bytes.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
            bytes.extend_from_slice(&0u16.to_le_bytes());
        }
        let back = TriangleMesh::read_stl_binary(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(back.triangles().len(), m.triangles().len());
        let (_, r1) = m.bounding_sphere();
        let (_, r2) = back.bounding_sphere();
        assert_abs_diff_eq!(r1, r2, epsilon = 1e-6);
    }

    #[test]
    fn stl_truncated_is_format_error() {
        let bytes = vec![0u8; 60];
        assert!(matches!(
            TriangleMesh::read_stl_binary(std::io::Cursor::new(bytes)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn surface_centroid_of_shifted_box() {
        let m = shapes::make_box(0.04, 0.02, 0.01).translated(&Vec3::new(0.1, -0.2, 0.3));
        let c = m.surface_centroid();
        assert!((c - Vec3::new(0.1, -0.2, 0.3)).norm() < 1e-12);
    }

    #[test]
    fn welzl_handles_duplicates_and_small_sets() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let (c, r) = smallest_enclosing_sphere(&[p, p, p]);
        assert!((c - p).norm() < 1e-12);
        assert!(r < 1e-9);
        let q = Vec3::new(3.0, 2.0, 3.0);
        let (c, r) = smallest_enclosing_sphere(&[p, q]);
        assert!((c - Vec3::new(2.0, 2.0, 3.0)).norm() < 1e-12);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
    }
}
