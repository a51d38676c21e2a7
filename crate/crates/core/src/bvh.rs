//! Bounding-volume hierarchy over mesh triangles with ray casting and
//! solid-shape overlap queries.
//!
//! Ray/triangle intersection uses the watertight scaled-barycentric
//! formulation so rays cannot slip through shared edges. Overlap queries
//! (oriented box, axis-capped cylinder) prune with node bounds and then
//! run exact per-triangle tests.

use crate::geom::{Mat3, Vec3};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow_point(&mut self, p: &Vec3) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn grow(&mut self, other: &Aabb) {
        self.grow_point(&other.min);
        self.grow_point(&other.max);
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn longest_axis(&self) -> usize {
        let d = self.max - self.min;
        if d.x >= d.y && d.x >= d.z {
            0
        } else if d.y >= d.z {
            1
        } else {
            2
        }
    }

    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && self.max[k] >= other.min[k])
    }

    /// Slab test returning the entry/exit parameters if the ray hits.
    pub fn ray_range(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let (mut near, mut far) = (
                (self.min[k] - origin[k]) * inv_dir[k],
                (self.max[k] - origin[k]) * inv_dir[k],
            );
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Binary BVH built by median split on the longest centroid axis.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles().len();
        let boxes: Vec<Aabb> = (0..n)
            .map(|i| {
                let mut b = Aabb::empty();
                for v in mesh.triangle_vertices(i) {
                    b.grow_point(&v);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n);
        build_node(&boxes, &centroids, &mut order, 0, n, &mut nodes);
        Bvh { nodes, order }
    }

    /// Nearest hit along `origin + t * dir` with `t` in `(t_min, t_max)`.
    pub fn ray_intersect(
        &self,
        mesh: &TriangleMesh,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<RayHit> {
        let ray = WatertightRay::new(origin, dir);
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut best_t = t_max;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().ray_range(origin, &inv_dir, best_t).is_none() {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &tri in &self.order[*start..*start + *count] {
                        let [a, b, c] = mesh.triangle_vertices(tri as usize);
                        if let Some((t, u, v)) = ray.intersect(&a, &b, &c, t_min, best_t) {
                            best_t = t;
                            best = Some(RayHit {
                                t,
                                triangle: tri as usize,
                                u,
                                v,
                            });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        best
    }

    /// Does any triangle overlap the oriented box? `rot` maps box-local
    /// coordinates to mesh coordinates; `half` are the box half-extents.
    pub fn intersects_obb(
        &self,
        mesh: &TriangleMesh,
        center: &Vec3,
        rot: &Mat3,
        half: &Vec3,
    ) -> bool {
        // Conservative world-space bounds of the box for tree pruning.
        let mut bounds = Aabb::empty();
        for i in 0..8 {
            let corner = Vec3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            );
            bounds.grow_point(&(center + rot * corner));
        }
        let rot_t = rot.transpose();
        self.any_in_bounds(mesh, &bounds, |tri| {
            let local = tri.map(|p| rot_t * (p - center));
            triangle_aabb_overlap(&local, half)
        })
    }

    /// Does any triangle enter the solid cylinder given by `origin`, unit
    /// `axis`, `radius`, spanning `z0..z1` along the axis?
    pub fn intersects_cylinder(
        &self,
        mesh: &TriangleMesh,
        origin: &Vec3,
        axis: &Vec3,
        radius: f64,
        z0: f64,
        z1: f64,
    ) -> bool {
        let (u, v) = orthonormal_basis(axis);
        let mut bounds = Aabb::empty();
        for &z in &[z0, z1] {
            let ring_center = origin + axis * z;
            for k in 0..3 {
                bounds.min[k] = bounds.min[k].min(ring_center[k] - radius);
                bounds.max[k] = bounds.max[k].max(ring_center[k] + radius);
            }
        }
        self.any_in_bounds(mesh, &bounds, |tri| {
            let local = tri.map(|p| {
                let d = p - origin;
                Vec3::new(d.dot(&u), d.dot(&v), d.dot(axis))
            });
            triangle_capped_cylinder_overlap(&local, radius, z0, z1)
        })
    }

    fn any_in_bounds(
        &self,
        mesh: &TriangleMesh,
        bounds: &Aabb,
        test: impl Fn([Vec3; 3]) -> bool,
    ) -> bool {
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !node.bounds().overlaps(bounds) {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &tri in &self.order[*start..*start + *count] {
                        if test(mesh.triangle_vertices(tri as usize)) {
                            return true;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        false
    }
}

fn build_node(
    boxes: &[Aabb],
    centroids: &[Vec3],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &order[start..start + count] {
        bounds.grow(&boxes[i as usize]);
        cbounds.grow_point(&centroids[i as usize]);
    }
    let idx = nodes.len();
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start,
            count,
        });
        return idx;
    }
    let axis = cbounds.longest_axis();
    let slice = &mut order[start..start + count];
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .partial_cmp(&centroids[b as usize][axis])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    nodes.push(Node::Leaf {
        bounds,
        start: 0,
        count: 0,
    }); // placeholder until children are built
    let left = build_node(boxes, centroids, order, start, mid, nodes);
    let right = build_node(boxes, centroids, order, start + mid, count - mid, nodes);
    nodes[idx] = Node::Inner {
        bounds,
        left,
        right,
    };
    idx
}

#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub t: f64,
    pub triangle: usize,
    pub u: f64,
    pub v: f64,
}

/// Precomputed shear constants of the watertight ray/triangle test.
pub struct WatertightRay {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl WatertightRay {
    pub fn new(origin: &Vec3, dir: &Vec3) -> Self {
        let kz = {
            let a = dir.map(f64::abs);
            if a.x >= a.y && a.x >= a.z {
                0
            } else if a.y >= a.z {
                1
            } else {
                2
            }
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        WatertightRay {
            origin: *origin,
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }

    /// Returns `(t, u, v)` for a hit with `t` in `(t_min, t_max)`.
    pub fn intersect(
        &self,
        va: &Vec3,
        vb: &Vec3,
        vc: &Vec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<(f64, f64, f64)> {
        let a = va - self.origin;
        let b = vb - self.origin;
        let c = vc - self.origin;
        let ax = a[self.kx] - self.sx * a[self.kz];
        let ay = a[self.ky] - self.sy * a[self.kz];
        let bx = b[self.kx] - self.sx * b[self.kz];
        let by = b[self.ky] - self.sy * b[self.kz];
        let cx = c[self.kx] - self.sx * c[self.kz];
        let cy = c[self.ky] - self.sy * c[self.kz];
        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;
        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * a[self.kz];
        let bz = self.sz * b[self.kz];
        let cz = self.sz * c[self.kz];
        let t_scaled = u * az + v * bz + w * cz;
        if det > 0.0 {
            if t_scaled <= t_min * det || t_scaled >= t_max * det {
                return None;
            }
        } else if t_scaled >= t_min * det || t_scaled <= t_max * det {
            return None;
        }
        let inv = 1.0 / det;
        Some((t_scaled * inv, u * inv, v * inv))
    }
}

/// Deterministic right-handed basis completion: returns `(u, v)` with
/// `u x v = axis` for a unit axis.
pub fn orthonormal_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let a = axis.map(f64::abs);
    let reference = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let u = (reference - axis * reference.dot(axis)).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Triangle vs axis-aligned box centered at the origin (separating-axis
/// test, 13 axes).
pub fn triangle_aabb_overlap(tri: &[Vec3; 3], half: &Vec3) -> bool {
    let [v0, v1, v2] = tri;
    // Axis-aligned extents.
    for k in 0..3 {
        let lo = v0[k].min(v1[k]).min(v2[k]);
        let hi = v0[k].max(v1[k]).max(v2[k]);
        if lo > half[k] || hi < -half[k] {
            return false;
        }
    }
    let edges = [v1 - v0, v2 - v1, v0 - v2];
    // Triangle plane.
    let n = edges[0].cross(&edges[1]);
    let d = n.dot(v0);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    if d.abs() > r {
        return false;
    }
    // Nine cross-product axes.
    let units = [Vec3::x(), Vec3::y(), Vec3::z()];
    for e in &edges {
        for u in &units {
            let axis = e.cross(u);
            let len2 = axis.norm_squared();
            if len2 < 1e-30 {
                continue;
            }
            let p0 = axis.dot(v0);
            let p1 = axis.dot(v1);
            let p2 = axis.dot(v2);
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}

/// Triangle (in cylinder-local coordinates: z along the axis) vs the solid
/// cylinder `x^2 + y^2 <= r^2`, `z0 <= z <= z1`.
///
/// The triangle is clipped to the z-slab; the clipped polygon intersects
/// the cylinder iff its x-y projection comes within `r` of the origin.
pub fn triangle_capped_cylinder_overlap(tri: &[Vec3; 3], radius: f64, z0: f64, z1: f64) -> bool {
    let mut poly: Vec<Vec3> = tri.to_vec();
    clip_halfspace(&mut poly, |p| p.z - z0); // keep z >= z0
    clip_halfspace(&mut poly, |p| z1 - p.z); // keep z <= z1
    if poly.is_empty() {
        return false;
    }
    let pts2: Vec<(f64, f64)> = poly.iter().map(|p| (p.x, p.y)).collect();
    polygon_distance_to_origin_2d(&pts2) <= radius
}

/// Sutherland-Hodgman clip against `f(p) >= 0`.
fn clip_halfspace(poly: &mut Vec<Vec3>, f: impl Fn(&Vec3) -> f64) {
    if poly.is_empty() {
        return;
    }
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let fa = f(&a);
        let fb = f(&b);
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa > 0.0 && fb < 0.0) || (fa < 0.0 && fb > 0.0) {
            let t = fa / (fa - fb);
            out.push(a + (b - a) * t);
        }
    }
    *poly = out;
}

/// Distance from the origin to a convex polygon in 2D (zero if inside).
fn polygon_distance_to_origin_2d(pts: &[(f64, f64)]) -> f64 {
    if pts.is_empty() {
        return f64::INFINITY;
    }
    if pts.len() == 1 {
        return (pts[0].0 * pts[0].0 + pts[0].1 * pts[0].1).sqrt();
    }
    if pts.len() >= 3 {
        // Inside test by sign consistency of edge cross products
        // (the clipped polygon is convex).
        let mut pos = false;
        let mut neg = false;
        for i in 0..pts.len() {
            let (ax, ay) = pts[i];
            let (bx, by) = pts[(i + 1) % pts.len()];
            let cross = (bx - ax) * (0.0 - ay) - (by - ay) * (0.0 - ax);
            if cross > 0.0 {
                pos = true;
            }
            if cross < 0.0 {
                neg = true;
            }
        }
        if !(pos && neg) {
            return 0.0;
        }
    }
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        let (ax, ay) = pts[i];
        let (bx, by) = pts[(i + 1) % pts.len()];
        best = best.min(point_segment_distance_2d(ax, ay, bx, by));
    }
    best
}

fn point_segment_distance_2d(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let dx = bx - ax;
    let dy = by - ay;
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (-(ax * dx) - ay * dy) / len2
    } else {
        0.0
    };
    let t = t.clamp(0.0, 1.0);
    let px = ax + t * dx;
    let py = ay + t * dy;
    (px * px + py * py).sqrt()
}
