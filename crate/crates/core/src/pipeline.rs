//! End-to-end pipeline stages behind the command-line interface.
//!
//! Every stage is a plain function over paths and options so the whole
//! chain (grasps -> scenes -> encode -> train -> eval) can run in-process.
//! All stages derive their random streams from one master seed, making the
//! complete pipeline bit-reproducible.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentConfig, BackgroundStore};
use crate::codec::encode_ground_truth;
use crate::dataset::{Dataset, Manifest, SceneRecord, DATASET_FORMAT_VERSION};
use crate::eval::{
    adi, ap_from_outcomes, match_class_agnostic, placement_report,
    DetectionOutcome, EvalReport, GtInstance, PoseEstimate, SampleRow,
};
use crate::geom::{Pose, Rotation, Vec3};
use crate::library::ObjectLibrary;
use crate::loss::LossWeights;
use crate::net::{ArchSpec, MiniFcn};
use crate::oracle::annotate_placements;
use crate::policy::{select, PolicyVariant, Selection};
use crate::render::DepthImage;
use crate::scene::generate_scene;
use crate::train::{binarize_with_codec, train, TrainConfig};
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenesGenOptions {
    pub cycles: usize,
    pub drop_limit: usize,
    pub seed: u64,
    /// Overrides the library's annotation fraction when set.
    pub annotate_fraction: Option<f64>,
    /// Worker threads for per-scene parallelism (0 = rayon default). The
    /// output is identical for any value.
    pub jobs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenesSummary {
    pub scenes: usize,
    pub annotated: usize,
    pub k_max: usize,
    pub skipped_objects: usize,
}

/// Generates grasps for every class, then `cycles * drop_limit` scenes
/// with fill levels cycling 1..=drop_limit, wiring everything into a
/// self-contained dataset directory.
pub fn scenes_gen(
    library: &ObjectLibrary,
    opts: &ScenesGenOptions,
    out_dir: &Path,
) -> Result<ScenesSummary> {
    if opts.cycles == 0 || opts.drop_limit == 0 {
        return Err(Error::config("cycles and drop limit must be positive"));
    }
    let grasp_sets = library.generate_grasps(derive_seed(opts.seed, "grasp-stage", 0))?;
    let codec = library.codec_config(&grasp_sets)?;
    let annotate_fraction = opts
        .annotate_fraction
        .unwrap_or(library.config.dataset.annotate_fraction);
    let scene_count = opts.cycles * opts.drop_limit;
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        scene_count,
        cycles: opts.cycles,
        drop_limit: opts.drop_limit,
        master_seed: opts.seed,
        annotate_fraction,
        camera: library.config.camera.clone(),
        bin: library.config.bin.clone(),
        codec: codec.clone(),
        oracle: library.config.oracle.clone(),
    };
    let dataset = Dataset::create(out_dir, manifest, library.class_geometries())?;
    dataset.write_grasps(&grasp_sets)?;

    let build_scene = |index: usize| -> Result<(SceneRecord, DepthImage, usize, bool)> {
        let fill = index % opts.drop_limit + 1;
        let jitter = &library.config.dataset;
        let mut bin = library.config.bin.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "bin", index as u64));
        let dx = rng.random_range(-jitter.bin_jitter_xy..=jitter.bin_jitter_xy);
        let dy = rng.random_range(-jitter.bin_jitter_xy..=jitter.bin_jitter_xy);
        let yaw = rng.random_range(-jitter.bin_jitter_yaw..=jitter.bin_jitter_yaw);
        bin.pose = bin
            .pose
            .compose(&Pose::from_parts(Rotation::rot_z(yaw), Vec3::new(dx, dy, 0.0)));
        let scene = generate_scene(
            &library.objects,
            fill,
            &bin,
            &library.config.camera,
            derive_seed(opts.seed, "scene", index as u64),
            jitter.max_attempts,
        )
        .map_err(|e| match e {
            Error::Unsatisfiable(msg) => {
                Error::Unsatisfiable(format!("scene {index} (fill {fill}): {msg}"))
            }
            other => other,
        })?;
        let (depth, ids) = scene.render(&library.objects);
        let mut roll_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, "annotate-roll", index as u64));
        let annotate = roll_rng.random::<f64>() < annotate_fraction;
        let placements = if annotate {
            Some(annotate_placements(
                &scene,
                &library.objects,
                &grasp_sets,
                &depth,
                &ids,
                &library.config.oracle,
                derive_seed(opts.seed, "oracle", index as u64),
            )?)
        } else {
            None
        };
        // Objects whose origin leaves the measurement volume are reported
        // for the summary; they are still stored (the encoder skips them).
        let skipped = scene
            .objects
            .iter()
            .filter(|o| crate::codec::cell_of(&o.pose.translation, &codec).is_none())
            .count();
        Ok((
            SceneRecord {
                index,
                bin_pose: bin.pose,
                objects: scene.objects,
                placements,
            },
            depth,
            skipped,
            annotate,
        ))
    };

    let indices: Vec<usize> = (0..scene_count).collect();
    let results: Vec<Result<(SceneRecord, DepthImage, usize, bool)>> = if opts.jobs == 1 {
        indices.iter().map(|&i| build_scene(i)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| indices.par_iter().map(|&i| build_scene(i)).collect())
    };
    let mut annotated = 0;
    let mut skipped_objects = 0;
    for r in results {
        let (record, depth, skipped, was_annotated) = r?;
        dataset.write_scene(&record, &depth)?;
        skipped_objects += skipped;
        annotated += usize::from(was_annotated);
    }
    Ok(ScenesSummary {
        scenes: scene_count,
        annotated,
        k_max: codec.k_max,
        skipped_objects,
    })
}

/// Encodes every scene of a dataset into tensor files
/// (`tensor_<i>.tsr`) in the output directory.
pub fn encode_dataset(data_dir: &Path, out_dir: &Path) -> Result<usize> {
    let ds = Dataset::open(data_dir)?;
    std::fs::create_dir_all(out_dir)?;
    let cfg = ds.codec();
    for i in 0..ds.scene_count() {
        let (record, _) = ds.load_scene(i)?;
        let (gt, _) = encode_ground_truth(&record.objects, record.placements.as_deref(), cfg)?;
        gt.tensor.save(
            cfg,
            &gt.presence_mask,
            &gt.placement_mask,
            &out_dir.join(format!("tensor_{i:05}.tsr")),
        )?;
    }
    Ok(ds.scene_count())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFileConfig {
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub augment_cfg: AugmentConfig,
    /// Directory of normalized background rasters, resolved relative to
    /// the config file.
    pub backgrounds: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub parameters: usize,
}

/// Trains a fresh estimator on a dataset and writes the model file.
pub fn train_model(
    data_dir: &Path,
    file_cfg: &TrainFileConfig,
    out_model: &Path,
) -> Result<TrainSummary> {
    let ds = Dataset::open(data_dir)?;
    let codec = ds.codec().clone();
    let camera = &ds.manifest.camera;
    if camera.width != camera.height {
        return Err(Error::config("training expects square input images"));
    }
    let mut samples = ds.train_samples()?;
    if file_cfg.train.binary_labels {
        for s in &mut samples {
            binarize_with_codec(&mut s.gt, &codec);
        }
    }
    let arch = ArchSpec::standard(camera.width as usize, codec.s, codec.channels());
    let mut net = MiniFcn::new(
        arch,
        codec,
        derive_seed(file_cfg.train.seed, "init", 0),
    )?;
    let backgrounds = match &file_cfg.backgrounds {
        Some(dir) => BackgroundStore::load_dir(dir, camera.width, camera.height)?,
        None => BackgroundStore::empty(),
    };
    let history = train(
        &mut net,
        &samples,
        &file_cfg.train,
        &file_cfg.loss,
        &ds.classes,
        &backgrounds,
        &file_cfg.augment_cfg,
    )?;
    net.save(out_model)?;
    Ok(TrainSummary {
        steps: history.len(),
        first_loss: history.first().map(|b| b.total).unwrap_or(0.0),
        final_loss: history.last().map(|b| b.total).unwrap_or(0.0),
        parameters: net.params.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    pub variant: PolicyVariant,
    pub presence_floor: f64,
    /// Visibility threshold for scoring/classification subsets.
    pub v_min: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            variant: PolicyVariant::Full,
            presence_floor: crate::policy::DEFAULT_PRESENCE_FLOOR,
            v_min: 0.5,
        }
    }
}

/// Runs the model over every scene: pooled average precision,
/// classification, and the policy's placement/OPE statistics.
pub fn evaluate(data_dir: &Path, model_path: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let ds = Dataset::open(data_dir)?;
    let net = MiniFcn::load(model_path)?;
    if net.codec != *ds.codec() {
        return Err(Error::config(
            "model codec configuration does not match the dataset",
        ));
    }
    let codec = ds.codec();
    let classes = &ds.classes;
    let (near, far) = codec.volume.z;

    let mut outcomes: Vec<DetectionOutcome> = Vec::new();
    let mut n_pos = vec![0usize; classes.len()];
    let mut cls_pairs: Vec<(u32, u32)> = Vec::new(); // (predicted, gt) for v >= v_min
    let mut rows: Vec<SampleRow> = Vec::new();

    for i in 0..ds.scene_count() {
        let (record, depth) = ds.load_scene(i)?;
        let image = depth.normalize_range(near, far);
        let tensor = net.forward(&image);
        let candidates = crate::codec::decode(&tensor, codec, opts.presence_floor);
        let estimates: Vec<PoseEstimate> = candidates
            .iter()
            .map(|c| PoseEstimate {
                class_id: c.class_id,
                confidence: c.presence,
                pose: c.pose,
            })
            .collect();
        let gts: Vec<GtInstance> = record
            .objects
            .iter()
            .map(|o| GtInstance {
                instance_id: o.instance_id,
                class_id: o.class_id,
                pose: o.pose,
                visibility: o.visibility,
            })
            .collect();
        let (scene_outcomes, scene_pos) =
            crate::eval::match_detections(&estimates, &gts, classes, opts.v_min)?;
        outcomes.extend(scene_outcomes);
        for (a, b) in n_pos.iter_mut().zip(&scene_pos) {
            *a += b;
        }
        for (ei, gi) in match_class_agnostic(&estimates, &gts, classes)? {
            if gts[gi].visibility >= opts.v_min {
                cls_pairs.push((estimates[ei].class_id, gts[gi].class_id));
            }
        }
        let selection = select(&tensor, codec, opts.variant, opts.presence_floor)?;
        if record.placements.is_some() {
            rows.push(selection_row(i, selection.as_ref(), &record, classes, codec)?);
        }
    }

    let ap = ap_from_outcomes(&outcomes, &n_pos, classes.len());
    let matched = cls_pairs.len();
    let classification_rate = if matched == 0 {
        0.0
    } else {
        cls_pairs.iter().filter(|(p, g)| p == g).count() as f64 / matched as f64
    };
    let placement = placement_report(&rows);
    let n_rows = rows.len().max(1) as f64;
    let report = EvalReport {
        variant: match opts.variant {
            PolicyVariant::Full => "full".into(),
            PolicyVariant::NoOpeScore => "no_ope".into(),
        },
        scenes: ds.scene_count(),
        mean_ap: ap.mean_ap,
        per_class_ap: ap.per_class,
        classification_rate,
        classification_matched: matched,
        ope_success_rate: rows.iter().filter(|r| r.ope_correct).count() as f64 / n_rows,
        ope_adi_success_rate: rows.iter().filter(|r| r.adi_correct).count() as f64 / n_rows,
        mean_relative_d_o: rows.iter().map(|r| r.d_o).sum::<f64>() / n_rows,
        placement,
        rows,
    };
    Ok(report)
}

/// Resolves a selection against the scene's annotations. The anchor is the
/// nearest ground-truth object by translation distance; the placement
/// label requires the predicted class to match that object's class.
fn selection_row(
    scene: usize,
    selection: Option<&Selection>,
    record: &SceneRecord,
    classes: &[crate::object::ClassGeometry],
    codec: &crate::codec::CodecConfig,
) -> Result<SampleRow> {
    let d_max = codec.d_max;
    let Some(sel) = selection else {
        return Ok(SampleRow {
            scene,
            selected: false,
            d_p: d_max,
            resolved: false,
            d_o: d_max,
            ope_correct: false,
            adi_correct: false,
            selected_class: 0,
            gt_class: 0,
            gripper_id: String::new(),
        });
    };
    // Nearest ground-truth object (ties: lower instance id).
    let mut nearest: Option<(f64, usize)> = None;
    for (oi, obj) in record.objects.iter().enumerate() {
        let d = (obj.pose.translation - sel.pose.translation).norm();
        if nearest.as_ref().is_none_or(|(bd, _)| d < *bd) {
            nearest = Some((d, oi));
        }
    }
    let Some((_, oi)) = nearest else {
        return Ok(SampleRow {
            scene,
            selected: true,
            d_p: d_max,
            resolved: false,
            d_o: d_max,
            ope_correct: false,
            adi_correct: false,
            selected_class: sel.class_id,
            gt_class: 0,
            gripper_id: sel.gripper_id.clone(),
        });
    };
    let obj = &record.objects[oi];
    let geom = &classes[obj.class_id as usize];
    let d_o = geom.relative_pose_distance(&sel.pose, &obj.pose)?;
    let points = geom.surface_points();
    let adi_dist = adi(&sel.pose, &obj.pose, &points);
    let mut d_p = d_max;
    let mut resolved = false;
    if sel.class_id == obj.class_id {
        if let Some(placements) = &record.placements {
            if let Some(ann) = placements.iter().find(|a| a.instance_id == obj.instance_id) {
                if let Some(rec) = ann.records.get(sel.grasp_index) {
                    d_p = rec.d_p.clamp(0.0, d_max);
                    resolved = true;
                }
            }
        }
    }
    Ok(SampleRow {
        scene,
        selected: true,
        d_p,
        resolved,
        d_o,
        ope_correct: d_o < 1.0,
        adi_correct: adi_dist < 0.1 * geom.diameter,
        selected_class: sel.class_id,
        gt_class: obj.class_id,
        gripper_id: sel.gripper_id.clone(),
    })
}

/// Single-image inference: loads a depth raster, runs the model, and
/// returns the policy's selection (codec and normalization come from the
/// model file).
pub fn pick(
    depth_path: &Path,
    model_path: &Path,
    variant: PolicyVariant,
    presence_floor: f64,
) -> Result<Option<Selection>> {
    let net = MiniFcn::load(model_path)?;
    let depth = DepthImage::load(depth_path)?;
    if depth.width as usize != net.arch.input_size || depth.height as usize != net.arch.input_size
    {
        return Err(Error::invalid(format!(
            "depth raster is {}x{}, model expects {0}x{0}",
            depth.width, depth.height
        )));
    }
    let (near, far) = net.codec.volume.z;
    let image = depth.normalize_range(near, far);
    let tensor = net.forward(&image);
    select(&tensor, &net.codec, variant, presence_floor)
}

/// Renders an evaluation report into a text summary plus CSV tables
/// (per-class precision-recall curves and distance histograms).
pub fn write_report_artifacts(report: &EvalReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut text = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(text, "variant:                    {}", report.variant);
    let _ = writeln!(text, "scenes:                     {}", report.scenes);
    let _ = writeln!(text, "mean AP:                    {:.4}", report.mean_ap);
    for c in &report.per_class_ap {
        let _ = writeln!(
            text,
            "  class {:<2} AP:               {:.4}  (gt: {})",
            c.class_id, c.ap, c.n_gt
        );
    }
    let _ = writeln!(
        text,
        "classification success:     {:.4}  ({} matched)",
        report.classification_rate, report.classification_matched
    );
    let _ = writeln!(text, "OPE success rate:           {:.4}", report.ope_success_rate);
    let _ = writeln!(text, "OPE success rate (ADI):     {:.4}", report.ope_adi_success_rate);
    let _ = writeln!(text, "mean relative d_o:          {:.4}", report.mean_relative_d_o);
    let _ = writeln!(
        text,
        "placement success rate:     {:.4}",
        report.placement.success_rate
    );
    let _ = writeln!(
        text,
        "mean relative d_p:          {:.4}",
        report.placement.mean_relative_d_p
    );
    let _ = writeln!(
        text,
        "placement samples:          {}  (unresolved: {})",
        report.placement.samples, report.placement.unresolved
    );
    std::fs::write(out_dir.join("report.txt"), text)?;

    for c in &report.per_class_ap {
        let mut csv = String::from("recall,precision\n");
        for (r, p) in &c.pr {
            let _ = writeln!(csv, "{r},{p}");
        }
        std::fs::write(out_dir.join(format!("pr_class_{}.csv", c.class_id)), csv)?;
    }

    // Histogram of selected placement distances (20 bins over [0, 1]).
    let mut bins = [0usize; 20];
    for row in &report.rows {
        let b = ((row.d_p * 20.0) as usize).min(19);
        bins[b] += 1;
    }
    let mut csv = String::from("bin_low,bin_high,count\n");
    for (i, count) in bins.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", i as f64 * 0.05, (i + 1) as f64 * 0.05, count);
    }
    std::fs::write(out_dir.join("dp_hist.csv"), csv)?;
    Ok(())
}
