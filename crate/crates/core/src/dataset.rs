//! On-disk dataset layout and loading.
//!
//! A dataset directory holds:
//!
//! ```text
//! manifest.json          counts, camera, bin, codec config, oracle params
//! classes.json           per-class geometry (diameter, lambda, symmetry,
//!                        surface samples, hook flag)
//! grasps_class_<j>.json  grasp sets in the wire format
//! scene_<i>.dph          depth raster (DPH1)
//! scene_<i>.json         bin pose, objects, optional placement records
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::codec::{encode_ground_truth, CodecConfig};
use crate::grasp::GraspSet;
use crate::geom::Pose;
use crate::object::ClassGeometry;
use crate::oracle::{OracleParams, PlacementAnnotation};
use crate::render::DepthImage;
use crate::scene::{BinSpec, SceneObject};
use crate::train::TrainSample;
use crate::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub scene_count: usize,
    pub cycles: usize,
    pub drop_limit: usize,
    pub master_seed: u64,
    pub annotate_fraction: f64,
    pub camera: CameraModel,
    pub bin: BinSpec,
    pub codec: CodecConfig,
    pub oracle: OracleParams,
}

/// One stored scene: the bin pose it was generated with, the objects in
/// the camera frame, and (for annotated scenes) the grasp labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub index: usize,
    pub bin_pose: Pose,
    pub objects: Vec<SceneObject>,
    pub placements: Option<Vec<PlacementAnnotation>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    dir: PathBuf,
    pub manifest: Manifest,
    pub classes: Vec<ClassGeometry>,
}

impl Dataset {
    /// Creates the directory (if needed) and writes manifest and class
    /// geometry. Scene files are appended with [`Dataset::write_scene`].
    pub fn create(dir: &Path, manifest: Manifest, classes: Vec<ClassGeometry>) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let ds = Dataset {
            dir: dir.to_path_buf(),
            manifest,
            classes,
        };
        std::fs::write(
            ds.dir.join("manifest.json"),
            serde_json::to_string_pretty(&ds.manifest)?,
        )?;
        std::fs::write(
            ds.dir.join("classes.json"),
            serde_json::to_string(&ds.classes)?,
        )?;
        Ok(ds)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path).map_err(|e| {
                Error::format(format!("cannot read {}: {e}", manifest_path.display()))
            })?,
        )?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(format!(
                "dataset format version {} unsupported (expected {})",
                manifest.format_version, DATASET_FORMAT_VERSION
            )));
        }
        let classes: Vec<ClassGeometry> =
            serde_json::from_str(&std::fs::read_to_string(dir.join("classes.json"))?)?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            classes,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn scene_count(&self) -> usize {
        self.manifest.scene_count
    }

    fn scene_paths(&self, index: usize) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("scene_{index:05}.dph")),
            self.dir.join(format!("scene_{index:05}.json")),
        )
    }

    pub fn write_scene(&self, record: &SceneRecord, image: &DepthImage) -> Result<()> {
        let (dph, json) = self.scene_paths(record.index);
        image.save(&dph)?;
        std::fs::write(json, serde_json::to_string(record)?)?;
        Ok(())
    }

    pub fn load_scene(&self, index: usize) -> Result<(SceneRecord, DepthImage)> {
        let (dph, json) = self.scene_paths(index);
        let record: SceneRecord = serde_json::from_str(&std::fs::read_to_string(&json).map_err(
            |e| Error::format(format!("cannot read {}: {e}", json.display())),
        )?)?;
        let image = DepthImage::load(&dph)?;
        if record.index != index {
            return Err(Error::format(format!(
                "scene file {index} carries index {}",
                record.index
            )));
        }
        Ok((record, image))
    }

    pub fn write_grasps(&self, sets: &[GraspSet]) -> Result<()> {
        for set in sets {
            set.save(&self.dir.join(format!("grasps_class_{}.json", set.class_id)))?;
        }
        Ok(())
    }

    pub fn load_grasps(&self) -> Result<Vec<GraspSet>> {
        (0..self.classes.len())
            .map(|j| GraspSet::load(&self.dir.join(format!("grasps_class_{j}.json"))))
            .collect()
    }

    pub fn codec(&self) -> &CodecConfig {
        &self.manifest.codec
    }

    /// Loads every scene as a training sample: normalized raster plus the
    /// encoded ground-truth tensor.
    pub fn train_samples(&self) -> Result<Vec<TrainSample>> {
        let cfg = &self.manifest.codec;
        (0..self.scene_count())
            .map(|i| {
                let (record, image) = self.load_scene(i)?;
                let (gt, _) =
                    encode_ground_truth(&record.objects, record.placements.as_deref(), cfg)?;
                Ok(TrainSample {
                    image: image.normalize(&self.manifest.camera),
                    gt,
                })
            })
            .collect()
    }
}
