//! Object library configuration: the single file that names meshes,
//! symmetry classes, the gripper registry, and the scene/oracle defaults.
//!
//! Libraries load from TOML or JSON (chosen by extension); mesh paths are
//! resolved relative to the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::codec::{ClassCodec, CodecConfig};
use crate::grasp::{GenParams, GraspSet, GripperSpec};
use crate::mesh::TriangleMesh;
use crate::object::{ClassGeometry, ObjectBuildOptions, ObjectModel};
use crate::oracle::OracleParams;
use crate::scene::{default_bin, default_camera, BinSpec};
use crate::symmetry::SymmetryClass;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub class_id: u32,
    pub name: String,
    pub mesh: PathBuf,
    pub symmetry: SymmetryClass,
    #[serde(default)]
    pub hook_like: bool,
}

/// Scene-generation knobs carried by the library file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    /// Fraction of scenes that receive grasp/placement annotations.
    pub annotate_fraction: f64,
    /// Bin pose jitter: in-plane translation (meters) and yaw (radians).
    pub bin_jitter_xy: f64,
    pub bin_jitter_yaw: f64,
    /// Position draws per object before a scene counts as unsatisfiable.
    pub max_attempts: usize,
    pub build: ObjectBuildOptions,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            annotate_fraction: 0.5,
            bin_jitter_xy: 0.02,
            bin_jitter_yaw: 5f64.to_radians(),
            max_attempts: 64,
            build: ObjectBuildOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecOptions {
    pub s: usize,
    pub d_max: f64,
}

impl Default for CodecOptions {
    fn default() -> Self {
        CodecOptions { s: 16, d_max: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LibraryConfig {
    #[serde(default = "default_camera")]
    pub camera: CameraModel,
    #[serde(default = "default_bin")]
    pub bin: BinSpec,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub grasp_gen: GenParams,
    #[serde(default)]
    pub codec: CodecOptions,
    #[serde(default)]
    pub dataset: DatasetOptions,
    pub grippers: Vec<GripperSpec>,
    pub objects: Vec<ObjectEntry>,
}

/// A loaded library: the config plus fully built object models, indexed by
/// class id.
#[derive(Debug, Clone)]
pub struct ObjectLibrary {
    pub config: LibraryConfig,
    pub objects: Vec<ObjectModel>,
}

impl ObjectLibrary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(format!("cannot read library {}: {e}", path.display())))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        let config: LibraryConfig = match ext.as_str() {
            "toml" => toml::from_str(&text)
                .map_err(|e| Error::format(format!("library toml: {e}")))?,
            "json" => serde_json::from_str(&text)?,
            other => {
                return Err(Error::format(format!(
                    "unsupported library extension '{other}' (expected toml or json)"
                )))
            }
        };
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_config(config, base)
    }

    /// Builds every object model (recentering, bounding sphere, moment
    /// matrix, surface samples).
    pub fn from_config(config: LibraryConfig, base_dir: &Path) -> Result<Self> {
        config.camera.validate()?;
        config.bin.validate()?;
        if config.grippers.is_empty() {
            return Err(Error::config("library declares no grippers"));
        }
        if config.objects.is_empty() {
            return Err(Error::config("library declares no objects"));
        }
        let mut ids: Vec<&str> = config.grippers.iter().map(GripperSpec::id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != config.grippers.len() {
            return Err(Error::config("duplicate gripper ids in the registry"));
        }
        for spec in &config.grippers {
            spec.validate()?;
        }
        let mut entries = config.objects.clone();
        entries.sort_by_key(|e| e.class_id);
        for (i, e) in entries.iter().enumerate() {
            if e.class_id as usize != i {
                return Err(Error::config(
                    "object class ids must be contiguous starting at 0",
                ));
            }
        }
        let objects = entries
            .iter()
            .map(|e| {
                let mesh_path = if e.mesh.is_absolute() {
                    e.mesh.clone()
                } else {
                    base_dir.join(&e.mesh)
                };
                let mesh = TriangleMesh::load(&mesh_path)?;
                ObjectModel::build(
                    e.class_id,
                    e.name.clone(),
                    mesh,
                    e.symmetry.clone(),
                    e.hook_like,
                    &config.dataset.build,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ObjectLibrary { config, objects })
    }

    /// Builds a library directly from in-memory meshes (tests, demos).
    pub fn from_parts(
        mut config: LibraryConfig,
        meshes: Vec<(ObjectEntry, TriangleMesh)>,
    ) -> Result<Self> {
        config.objects = meshes.iter().map(|(e, _)| e.clone()).collect();
        let objects = meshes
            .into_iter()
            .map(|(e, mesh)| {
                ObjectModel::build(
                    e.class_id,
                    e.name,
                    mesh,
                    e.symmetry,
                    e.hook_like,
                    &config.dataset.build,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ObjectLibrary { config, objects })
    }

    /// Deterministic grasp generation for every class, gripper registry
    /// order preserved.
    pub fn generate_grasps(&self, master_seed: u64) -> Result<Vec<GraspSet>> {
        self.objects
            .iter()
            .map(|obj| {
                GraspSet::generate(
                    obj.class_id,
                    &obj.mesh,
                    &self.config.grippers,
                    &self.config.grasp_gen,
                    derive_seed(master_seed, "grasps", obj.class_id as u64),
                )
            })
            .collect()
    }

    /// Codec configuration for the given grasp sets: grid size and `d_max`
    /// from the library options, volume bounds from the camera frustum at
    /// the bin floor depth.
    pub fn codec_config(&self, grasp_sets: &[GraspSet]) -> Result<CodecConfig> {
        if grasp_sets.len() != self.objects.len() {
            return Err(Error::config("grasp set count does not match classes"));
        }
        let classes = grasp_sets
            .iter()
            .map(|s| ClassCodec {
                class_id: s.class_id,
                blocks: s.blocks(),
            })
            .collect();
        // Depth of the bin floor plane in the camera frame.
        let floor_cam = self
            .config
            .camera
            .view()
            .compose(&self.config.bin.pose)
            .translation
            .z;
        let volume = CodecConfig::frustum_volume(&self.config.camera, floor_cam);
        let cfg = CodecConfig::new(self.config.codec.s, volume, classes, self.config.codec.d_max);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn class_geometries(&self) -> Vec<ClassGeometry> {
        self.objects.iter().map(ClassGeometry::from).collect()
    }
}
