//! Dense grid tensor codec.
//!
//! The sensor's measurement volume is split into an `S x S` grid over the
//! camera-frame x-y bounds (one z slab). Each cell carries an
//! `(8 + C + K_max)`-dimensional feature vector:
//!
//! ```text
//! [ p, x, y, z, phi1, phi2, phi3, d_o, class one-hot (C), d_p (K_max) ]
//! ```
//!
//! Positions are normalized linearly to `[-1, 1]` over the volume bounds;
//! Euler angles (intrinsic Z-Y'-X'', canonical range `(-pi, pi]`) are
//! scaled by `1/pi`. The `d_o` channel has a dynamic target and stays zero
//! in ground truth. The `d_p` block concatenates per-gripper grasp labels
//! in registry order, padded with `d_max` past the class's grasp count.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::geom::{canonical_angle, Pose, Rotation, Vec3};
use crate::oracle::PlacementAnnotation;
use crate::scene::SceneObject;
use crate::{Error, Result};

pub const CH_P: usize = 0;
pub const CH_X: usize = 1;
pub const CH_Y: usize = 2;
pub const CH_Z: usize = 3;
pub const CH_PHI: usize = 4;
pub const CH_DO: usize = 7;
pub const CH_CLASS: usize = 8;

pub const EULER_CONVENTION: &str = "zyx-intrinsic";

/// Grasp-index layout of one class: `(gripper_id, count)` blocks in
/// registry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCodec {
    pub class_id: u32,
    pub blocks: Vec<(String, usize)>,
}

impl ClassCodec {
    pub fn k_total(&self) -> usize {
        self.blocks.iter().map(|(_, n)| n).sum()
    }

    /// Maps a global grasp index to `(gripper_id, local index)`.
    pub fn resolve(&self, k: usize) -> Option<(&str, usize)> {
        let mut offset = 0;
        for (id, n) in &self.blocks {
            if k < offset + n {
                return Some((id.as_str(), k - offset));
            }
            offset += n;
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeBounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub s: usize,
    pub c: usize,
    pub k_max: usize,
    pub d_max: f64,
    pub volume: VolumeBounds,
    /// Indexed by class id.
    pub classes: Vec<ClassCodec>,
    pub euler_convention: String,
}

impl CodecConfig {
    pub fn new(s: usize, volume: VolumeBounds, classes: Vec<ClassCodec>, d_max: f64) -> Self {
        let k_max = classes.iter().map(ClassCodec::k_total).max().unwrap_or(0);
        CodecConfig {
            s,
            c: classes.len(),
            k_max,
            d_max,
            volume,
            classes,
            euler_convention: EULER_CONVENTION.to_string(),
        }
    }

    /// Volume bounds from the camera frustum footprint at the given depth
    /// (normally the bin floor), with the z slab spanning near to far.
    pub fn frustum_volume(camera: &CameraModel, floor_depth: f64) -> VolumeBounds {
        let (x0, x1, y0, y1) = camera.frustum_footprint(floor_depth);
        VolumeBounds {
            x: (x0, x1),
            y: (y0, y1),
            z: (camera.near, camera.far),
        }
    }

    pub fn channels(&self) -> usize {
        8 + self.c + self.k_max
    }

    pub fn cells(&self) -> usize {
        self.s * self.s
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::config("grid size S must be at least 1"));
        }
        if self.d_max <= 0.0 {
            return Err(Error::config("d_max must be positive"));
        }
        if self.euler_convention != EULER_CONVENTION {
            return Err(Error::config(format!(
                "unsupported euler convention '{}'",
                self.euler_convention
            )));
        }
        if self.classes.len() != self.c {
            return Err(Error::config("class count mismatch"));
        }
        for (j, cc) in self.classes.iter().enumerate() {
            if cc.class_id as usize != j {
                return Err(Error::config("classes must be indexed by class id"));
            }
            if cc.k_total() > self.k_max {
                return Err(Error::config(format!(
                    "class {j} has {} grasps, exceeding K_max = {}",
                    cc.k_total(),
                    self.k_max
                )));
            }
        }
        let ok = |(a, b): (f64, f64)| a < b;
        if !(ok(self.volume.x) && ok(self.volume.y) && ok(self.volume.z)) {
            return Err(Error::config("degenerate measurement volume"));
        }
        Ok(())
    }
}

/// Row-major cell index of a camera-frame origin, or `None` when the
/// origin leaves the measurement volume. Bounds are half-open: a point at
/// the exact upper bound is out of volume.
pub fn cell_of(origin: &Vec3, cfg: &CodecConfig) -> Option<usize> {
    let s = cfg.s as f64;
    let fx = (origin.x - cfg.volume.x.0) / (cfg.volume.x.1 - cfg.volume.x.0);
    let fy = (origin.y - cfg.volume.y.0) / (cfg.volume.y.1 - cfg.volume.y.0);
    let fz = (origin.z - cfg.volume.z.0) / (cfg.volume.z.1 - cfg.volume.z.0);
    if !(0.0..1.0).contains(&fx) || !(0.0..1.0).contains(&fy) || !(0.0..1.0).contains(&fz) {
        return None;
    }
    let col = (fx * s).floor() as usize;
    let row = (fy * s).floor() as usize;
    Some(row * cfg.s + col)
}

fn norm_lin(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (v - lo) / (hi - lo) * 2.0 - 1.0
}

fn denorm_lin(v: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (v + 1.0) / 2.0 * (hi - lo)
}

/// Cell-major tensor of shape `S x S x (8 + C + K_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTensor {
    pub s: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl OutputTensor {
    pub fn zeros(cfg: &CodecConfig) -> Self {
        OutputTensor {
            s: cfg.s,
            channels: cfg.channels(),
            data: vec![0.0; cfg.cells() * cfg.channels()],
        }
    }

    pub fn cells(&self) -> usize {
        self.s * self.s
    }

    #[inline]
    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn matches(&self, cfg: &CodecConfig) -> bool {
        self.s == cfg.s && self.channels == cfg.channels()
    }

    /// Pose stored in a cell's channels, denormalized to the camera frame.
    pub fn cell_pose(&self, i: usize, cfg: &CodecConfig) -> Pose {
        let cell = self.cell(i);
        let t = Vec3::new(
            denorm_lin(cell[CH_X], cfg.volume.x),
            denorm_lin(cell[CH_Y], cfg.volume.y),
            denorm_lin(cell[CH_Z], cfg.volume.z),
        );
        let pi = std::f64::consts::PI;
        let rot = Rotation::from_euler_zyx(
            cell[CH_PHI] * pi,
            cell[CH_PHI + 1] * pi,
            cell[CH_PHI + 2] * pi,
        );
        Pose::from_parts(rot, t)
    }

    /// Index of the largest class channel (ties: lowest index).
    pub fn cell_class(&self, i: usize, cfg: &CodecConfig) -> usize {
        let cell = self.cell(i);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for j in 0..cfg.c {
            let v = cell[CH_CLASS + j];
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        best
    }

    /// Writes the `TSR1` format: magic, u32 LE `S`, `C`, `K_max`, f32 LE
    /// values (cell-major, then channel), then the presence and placement
    /// bitsets.
    pub fn write(
        &self,
        cfg: &CodecConfig,
        presence: &CellMask,
        placement: &CellMask,
        w: &mut impl Write,
    ) -> Result<()> {
        w.write_all(b"TSR1")?;
        w.write_u32::<LittleEndian>(cfg.s as u32)?;
        w.write_u32::<LittleEndian>(cfg.c as u32)?;
        w.write_u32::<LittleEndian>(cfg.k_max as u32)?;
        for &v in &self.data {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
        presence.write(w)?;
        placement.write(w)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<(OutputTensor, CellMask, CellMask)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("tensor: truncated magic"))?;
        if &magic != b"TSR1" {
            return Err(Error::format("tensor: bad magic bytes"));
        }
        let s = read_u32(r)? as usize;
        let c = read_u32(r)? as usize;
        let k_max = read_u32(r)? as usize;
        let channels = 8 + c + k_max;
        let n = s * s * channels;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from(
                r.read_f32::<LittleEndian>()
                    .map_err(|_| Error::format("tensor: truncated payload"))?,
            ));
        }
        let presence = CellMask::read(r, s * s)?;
        let placement = CellMask::read(r, s * s)?;
        Ok((
            OutputTensor { s, channels, data },
            presence,
            placement,
        ))
    }

    pub fn save(
        &self,
        cfg: &CodecConfig,
        presence: &CellMask,
        placement: &CellMask,
        path: &Path,
    ) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(cfg, presence, placement, &mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::format("tensor: truncated header"))
}

/// Per-cell bitset (row-major cell order, LSB first within each byte).
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    len: usize,
    bits: Vec<u8>,
}

impl CellMask {
    pub fn new(len: usize) -> Self {
        CellMask {
            len,
            bits: vec![0; len.div_ceil(8)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len);
        if value {
            self.bits[i / 8] |= 1 << (i % 8);
        } else {
            self.bits[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.bits[i / 8] & (1 << (i % 8)) != 0
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.bits)?;
        Ok(())
    }

    fn read(r: &mut impl Read, len: usize) -> Result<Self> {
        let mut bits = vec![0u8; len.div_ceil(8)];
        r.read_exact(&mut bits)
            .map_err(|_| Error::format("tensor: truncated mask"))?;
        Ok(CellMask { len, bits })
    }
}

/// Ground truth for one sample: the tensor plus everything the loss needs
/// alongside it (placement gating and per-cell visibility).
#[derive(Debug, Clone)]
pub struct GtSample {
    pub tensor: OutputTensor,
    pub presence_mask: CellMask,
    pub placement_mask: CellMask,
    /// Visibility of the object occupying each cell (0 where empty).
    pub visibility: Vec<f64>,
    /// Instance id occupying each cell.
    pub cell_instance: Vec<Option<u32>>,
}

/// Assembles the ground-truth tensor for a scene.
///
/// Cells contested by several objects go to the higher visibility (ties:
/// lower instance id). Out-of-volume objects are skipped and reported in
/// the second return value. The placement mask marks cells whose object
/// carries grasp annotations; their `d_p` blocks hold clipped label values
/// with `d_max` for non-executed or entangled grasps and as padding past
/// the class's grasp count.
pub fn encode_ground_truth(
    objects: &[SceneObject],
    placements: Option<&[PlacementAnnotation]>,
    cfg: &CodecConfig,
) -> Result<(GtSample, Vec<u32>)> {
    cfg.validate()?;
    let cells = cfg.cells();
    let mut winner: Vec<Option<usize>> = vec![None; cells];
    let mut skipped = Vec::new();
    for (oi, obj) in objects.iter().enumerate() {
        if obj.class_id as usize >= cfg.c {
            return Err(Error::config(format!(
                "object class {} outside codec range",
                obj.class_id
            )));
        }
        match cell_of(&obj.pose.translation, cfg) {
            Some(cell) => {
                let replace = match winner[cell] {
                    None => true,
                    Some(prev) => {
                        let p = &objects[prev];
                        obj.visibility > p.visibility
                            || (obj.visibility == p.visibility
                                && obj.instance_id < p.instance_id)
                    }
                };
                if replace {
                    winner[cell] = Some(oi);
                }
            }
            None => {
                log::warn!(
                    "object instance {} origin outside measurement volume; skipped",
                    obj.instance_id
                );
                skipped.push(obj.instance_id);
            }
        }
    }

    let mut tensor = OutputTensor::zeros(cfg);
    let mut presence = CellMask::new(cells);
    let mut placement_mask = CellMask::new(cells);
    let mut visibility = vec![0.0; cells];
    let mut cell_instance = vec![None; cells];
    let pi = std::f64::consts::PI;
    for (cell_idx, w) in winner.iter().enumerate() {
        let Some(oi) = *w else { continue };
        let obj = &objects[oi];
        let class = obj.class_id as usize;
        let k_j = cfg.classes[class].k_total();
        presence.set(cell_idx, true);
        visibility[cell_idx] = obj.visibility;
        cell_instance[cell_idx] = Some(obj.instance_id);
        let (yaw, pitch, roll) = obj.pose.rotation.euler_zyx();
        let t = obj.pose.translation;
        let cell = tensor.cell_mut(cell_idx);
        cell[CH_P] = 1.0;
        cell[CH_X] = norm_lin(t.x, cfg.volume.x);
        cell[CH_Y] = norm_lin(t.y, cfg.volume.y);
        cell[CH_Z] = norm_lin(t.z, cfg.volume.z);
        cell[CH_PHI] = canonical_angle(yaw) / pi;
        cell[CH_PHI + 1] = canonical_angle(pitch) / pi;
        cell[CH_PHI + 2] = canonical_angle(roll) / pi;
        cell[CH_DO] = 0.0; // dynamic target, assembled during training
        cell[CH_CLASS + class] = 1.0;
        if let Some(ann) = placements.and_then(|p| {
            p.iter().find(|a| a.instance_id == obj.instance_id)
        }) {
            if ann.records.len() != k_j {
                return Err(Error::config(format!(
                    "instance {} has {} grasp records, class {} expects {}",
                    obj.instance_id,
                    ann.records.len(),
                    class,
                    k_j
                )));
            }
            let dp = &mut cell[CH_CLASS + cfg.c..];
            for v in dp.iter_mut() {
                *v = cfg.d_max;
            }
            for rec in &ann.records {
                let k = rec.k as usize;
                if k >= k_j {
                    return Err(Error::config(format!(
                        "grasp record index {k} out of range for class {class}"
                    )));
                }
                dp[k] = if !rec.executed || rec.entangled {
                    cfg.d_max
                } else {
                    rec.d_p.clamp(0.0, cfg.d_max)
                };
            }
            placement_mask.set(cell_idx, true);
        }
    }
    Ok((
        GtSample {
            tensor,
            presence_mask: presence,
            placement_mask,
            visibility,
            cell_instance,
        },
        skipped,
    ))
}

/// A decoded per-cell estimate.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub cell: usize,
    pub presence: f64,
    pub pose: Pose,
    pub d_o: f64,
    pub class_id: u32,
    /// Placement distances truncated to the predicted class's grasp count.
    pub d_p: Vec<f64>,
}

/// Decodes every cell at or above the presence threshold, sorted by
/// presence descending (ties: lower cell index).
pub fn decode(tensor: &OutputTensor, cfg: &CodecConfig, threshold: f64) -> Vec<Candidate> {
    assert!(tensor.matches(cfg), "tensor shape mismatch");
    let mut out = Vec::new();
    for i in 0..tensor.cells() {
        let cell = tensor.cell(i);
        let p = cell[CH_P];
        if p < threshold {
            continue;
        }
        let class = tensor.cell_class(i, cfg);
        let k_j = cfg.classes[class].k_total();
        let dp_all = &cell[CH_CLASS + cfg.c..];
        out.push(Candidate {
            cell: i,
            presence: p,
            pose: tensor.cell_pose(i, cfg),
            d_o: cell[CH_DO],
            class_id: class as u32,
            d_p: dp_all[..k_j].to_vec(),
        });
    }
    out.sort_by(|a, b| {
        b.presence
            .partial_cmp(&a.presence)
            .unwrap()
            .then(a.cell.cmp(&b.cell))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use crate::oracle::GraspRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cfg() -> CodecConfig {
        let classes = vec![
            ClassCodec {
                class_id: 0,
                blocks: vec![("cup".into(), 3), ("pj".into(), 2)],
            },
            ClassCodec {
                class_id: 1,
                blocks: vec![("cup".into(), 8)],
            },
        ];
        CodecConfig::new(
            16,
            VolumeBounds {
                x: (-0.25, 0.25),
                y: (-0.25, 0.25),
                z: (0.4, 1.2),
            },
            classes,
            1.0,
        )
    }

    fn object(id: u32, class: u32, t: Vec3, v: f64) -> SceneObject {
        SceneObject {
            instance_id: id,
            class_id: class,
            pose: Pose::from_parts(Rotation::from_euler_zyx(0.3, -0.5, 1.1), t),
            visibility: v,
        }
    }

    #[test]
    fn cell_of_center_and_edges() {
        let cfg = test_cfg();
        // Volume center lands in the center cell with floor rounding.
        let c = cell_of(&Vec3::new(0.0, 0.0, 0.8), &cfg).unwrap();
        assert_eq!(c, 8 * 16 + 8);
        // Lower x bound: column 0; upper bound - eps: column 15.
        assert_eq!(
            cell_of(&Vec3::new(-0.25, 0.0, 0.8), &cfg).unwrap() % 16,
            0
        );
        assert_eq!(
            cell_of(&Vec3::new(0.25 - 1e-9, 0.0, 0.8), &cfg).unwrap() % 16,
            15
        );
        // Exact upper bound and anything beyond is out of volume.
        assert!(cell_of(&Vec3::new(0.25, 0.0, 0.8), &cfg).is_none());
        assert!(cell_of(&Vec3::new(0.0, 0.0, 1.3), &cfg).is_none());
        assert!(cell_of(&Vec3::new(0.0, 0.0, 0.3), &cfg).is_none());
    }

    #[test]
    fn cell_histogram_is_uniform_for_uniform_origins() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 256 * 200;
        let mut counts = vec![0usize; cfg.cells()];
        for _ in 0..n {
            let p = Vec3::new(
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
                rng.random_range(0.4..1.2),
            );
            counts[cell_of(&p, &cfg).unwrap()] += 1;
        }
        let mean = n as f64 / 256.0;
        let sigma = (n as f64 * (1.0 / 256.0) * (255.0 / 256.0)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "cell {i}: {c} vs mean {mean:.1} (3 sigma = {:.1})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn empty_scene_encodes_to_zero_tensor() {
        let cfg = test_cfg();
        let (gt, skipped) = encode_ground_truth(&[], None, &cfg).unwrap();
        assert!(gt.tensor.data.iter().all(|&v| v == 0.0));
        assert_eq!(gt.presence_mask.count(), 0);
        assert_eq!(gt.placement_mask.count(), 0);
        assert!(skipped.is_empty());
    }

    #[test]
    fn higher_visibility_wins_cell_conflicts() {
        let cfg = test_cfg();
        let t = Vec3::new(0.01, 0.01, 0.8);
        let objs = vec![object(0, 0, t, 0.4), object(1, 1, t, 0.9)];
        let (gt, _) = encode_ground_truth(&objs, None, &cfg).unwrap();
        let cell = cell_of(&t, &cfg).unwrap();
        assert_eq!(gt.cell_instance[cell], Some(1));
        assert_eq!(gt.tensor.cell(cell)[CH_CLASS + 1], 1.0);
        assert_eq!(gt.visibility[cell], 0.9);
        // Tie on visibility: lower instance id wins.
        let objs = vec![object(5, 0, t, 0.7), object(2, 1, t, 0.7)];
        let (gt, _) = encode_ground_truth(&objs, None, &cfg).unwrap();
        assert_eq!(gt.cell_instance[cell], Some(2));
    }

    #[test]
    fn out_of_volume_objects_are_skipped() {
        let cfg = test_cfg();
        let objs = vec![object(3, 0, Vec3::new(0.6, 0.0, 0.8), 1.0)];
        let (gt, skipped) = encode_ground_truth(&objs, None, &cfg).unwrap();
        assert_eq!(skipped, vec![3]);
        assert_eq!(gt.presence_mask.count(), 0);
    }

    #[test]
    fn dp_block_is_padded_with_d_max() {
        // Class 0 has K_j = 5 with K_max = 8: entries 5..8 must be d_max.
        let cfg = test_cfg();
        let t = Vec3::new(0.0, 0.0, 0.8);
        let objs = vec![object(0, 0, t, 1.0)];
        let ann = vec![PlacementAnnotation {
            instance_id: 0,
            target_pose: Pose::identity(),
            records: (0..5)
                .map(|k| GraspRecord {
                    k,
                    executed: true,
                    d_p: 0.1 * (k as f64 + 1.0),
                    entangled: false,
                })
                .collect(),
        }];
        let (gt, _) = encode_ground_truth(&objs, Some(&ann), &cfg).unwrap();
        let cell = cell_of(&t, &cfg).unwrap();
        assert!(gt.placement_mask.get(cell));
        let dp = &gt.tensor.cell(cell)[CH_CLASS + cfg.c..];
        assert_eq!(dp.len(), 8);
        for k in 0..5 {
            assert!((dp[k] - 0.1 * (k as f64 + 1.0)).abs() < 1e-12);
        }
        for k in 5..8 {
            assert_eq!(dp[k], 1.0);
        }
    }

    #[test]
    fn non_executed_entangled_and_overflowing_labels_become_d_max() {
        let cfg = test_cfg();
        let t = Vec3::new(0.0, 0.0, 0.8);
        let objs = vec![object(0, 0, t, 1.0)];
        let ann = vec![PlacementAnnotation {
            instance_id: 0,
            target_pose: Pose::identity(),
            records: vec![
                GraspRecord { k: 0, executed: false, d_p: 0.2, entangled: false },
                GraspRecord { k: 1, executed: true, d_p: 0.2, entangled: true },
                GraspRecord { k: 2, executed: true, d_p: 7.5, entangled: false },
                GraspRecord { k: 3, executed: true, d_p: 0.25, entangled: false },
                GraspRecord { k: 4, executed: true, d_p: 0.0, entangled: false },
            ],
        }];
        let (gt, _) = encode_ground_truth(&objs, Some(&ann), &cfg).unwrap();
        let cell = cell_of(&t, &cfg).unwrap();
        let dp = &gt.tensor.cell(cell)[CH_CLASS + cfg.c..];
        assert_eq!(dp[0], 1.0); // not executed
        assert_eq!(dp[1], 1.0); // entangled
        assert_eq!(dp[2], 1.0); // clipped
        assert!((dp[3] - 0.25).abs() < 1e-12);
        assert_eq!(dp[4], 0.0);
    }

    #[test]
    fn unannotated_objects_leave_placement_mask_clear() {
        let cfg = test_cfg();
        let t = Vec3::new(0.0, 0.0, 0.8);
        let objs = vec![object(0, 0, t, 1.0)];
        let (gt, _) = encode_ground_truth(&objs, None, &cfg).unwrap();
        let cell = cell_of(&t, &cfg).unwrap();
        assert!(gt.presence_mask.get(cell));
        assert!(!gt.placement_mask.get(cell));
    }

    #[test]
    fn encode_decode_recovers_poses() {
        let cfg = test_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut objs = Vec::new();
        for i in 0..24 {
            let pi = std::f64::consts::PI;
            let rot = if i == 0 {
                // Exact gimbal case.
                Rotation::from_euler_zyx(0.7, std::f64::consts::FRAC_PI_2, 0.0)
            } else {
                Rotation::from_euler_zyx(
                    rng.random_range(-pi..pi),
                    rng.random_range(-pi..pi),
                    rng.random_range(-pi..pi),
                )
            };
            objs.push(SceneObject {
                instance_id: i,
                class_id: (i % 2) as u32,
                pose: Pose::from_parts(
                    rot,
                    Vec3::new(
                        rng.random_range(-0.24..0.24),
                        rng.random_range(-0.24..0.24),
                        rng.random_range(0.5..1.1),
                    ),
                ),
                visibility: rng.random_range(0.1..1.0),
            });
        }
        let (gt, skipped) = encode_ground_truth(&objs, None, &cfg).unwrap();
        assert!(skipped.is_empty());
        let candidates = decode(&gt.tensor, &cfg, 0.5);
        assert_eq!(candidates.len(), gt.presence_mask.count());
        for cand in &candidates {
            let inst = gt.cell_instance[cand.cell].unwrap();
            let obj = objs.iter().find(|o| o.instance_id == inst).unwrap();
            assert_eq!(cand.class_id, obj.class_id);
            assert!(
                (cand.pose.translation - obj.pose.translation).norm() < 1e-9,
                "translation error"
            );
            let rel = cand.pose.rotation.inverse() * obj.pose.rotation;
            let angle = rel.angle_accurate();
            assert!(angle < 1e-9, "rotation error {angle}");
            assert_eq!(cand.d_p.len(), cfg.classes[cand.class_id as usize].k_total());
        }
    }

    #[test]
    fn decode_thresholds() {
        let cfg = test_cfg();
        let tensor = OutputTensor::zeros(&cfg);
        assert!(decode(&tensor, &cfg, 0.5).is_empty());
        // Threshold 0 yields every cell.
        let all = decode(&tensor, &cfg, 0.0);
        assert_eq!(all.len(), cfg.cells());
    }

    #[test]
    fn decode_sorts_by_presence() {
        let cfg = test_cfg();
        let mut tensor = OutputTensor::zeros(&cfg);
        tensor.cell_mut(10)[CH_P] = 0.7;
        tensor.cell_mut(3)[CH_P] = 0.9;
        tensor.cell_mut(200)[CH_P] = 0.7;
        let c = decode(&tensor, &cfg, 0.5);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].cell, 3);
        assert_eq!(c[1].cell, 10); // tie broken by lower cell index
        assert_eq!(c[2].cell, 200);
    }

    #[test]
    fn tensor_file_round_trip_and_bad_magic() {
        let cfg = test_cfg();
        let t = Vec3::new(0.05, -0.04, 0.9);
        let objs = vec![object(0, 1, t, 0.8)];
        let (gt, _) = encode_ground_truth(&objs, None, &cfg).unwrap();
        let mut buf = Vec::new();
        gt.tensor
            .write(&cfg, &gt.presence_mask, &gt.placement_mask, &mut buf)
            .unwrap();
        let (back, presence, placement) =
            OutputTensor::read(&mut std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back.s, cfg.s);
        assert_eq!(back.channels, cfg.channels());
        assert_eq!(presence.count(), gt.presence_mask.count());
        assert_eq!(placement.count(), 0);
        for (a, b) in gt.tensor.data.iter().zip(&back.data) {
            assert_eq!(*a as f32, *b as f32);
        }
        let mut corrupt = buf.clone();
        corrupt[1] = b'X';
        assert!(matches!(
            OutputTensor::read(&mut std::io::Cursor::new(&corrupt)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn config_validation_rejects_k_overflow() {
        let mut cfg = test_cfg();
        cfg.k_max = 4; // class 1 has 8 grasps
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
