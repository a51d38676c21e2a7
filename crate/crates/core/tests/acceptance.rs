//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers.
//!
//! The heavier criteria share a 500-scene fixture dataset (10 cycles of 50
//! fill levels, fully annotated) built once into a shared temp directory.

mod common;

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use binpick_core::codec::{decode, encode_ground_truth, ClassCodec, CodecConfig, VolumeBounds};
use binpick_core::dataset::Dataset;
use binpick_core::eval::{adi, ap_evaluate, GtInstance, PoseEstimate};
use binpick_core::geom::{Mat3, Pose, Rotation, Vec3};
use binpick_core::library::ObjectLibrary;
use binpick_core::loss::LossWeights;
use binpick_core::net::{ArchSpec, MiniFcn};
use binpick_core::object::ClassGeometry;
use binpick_core::pipeline::{
    evaluate, scenes_gen, train_model, EvalOptions, ScenesGenOptions, TrainFileConfig,
};
use binpick_core::policy::{select, PolicyVariant};
use binpick_core::symmetry::{
    pose_distance, revolution_scalars, unify_orientation, SymmetryClass,
};
use binpick_core::train::{gradient_check, train, OptimizerKind, TrainConfig, TrainSample};
use binpick_core::{derive_seed, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------
// Shared fixture: the demo library plus a 500-scene annotated dataset.
// ---------------------------------------------------------------------

struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    library: ObjectLibrary,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let library = common::demo_library();
        let data = dir.path().join("data");
        let opts = ScenesGenOptions {
            cycles: 10,
            drop_limit: 50,
            seed: 20_240_101,
            annotate_fraction: Some(1.0),
            jobs: 0,
        };
        let summary = scenes_gen(&library, &opts, &data).expect("fixture dataset");
        assert_eq!(summary.scenes, 500);
        Fixture {
            _dir: dir,
            data,
            library,
        }
    })
}

// ---------------------------------------------------------------------
// Criterion 1: pose distance vs brute-force symmetry enumeration.
// ---------------------------------------------------------------------

fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let pi = std::f64::consts::PI;
    Rotation::from_euler_zyx(
        rng.random_range(-pi..pi),
        rng.random_range(-pi..pi),
        rng.random_range(-pi..pi),
    )
}

fn random_pose(rng: &mut impl Rng) -> Pose {
    Pose::from_parts(
        random_rotation(rng),
        Vec3::new(
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.25..0.25),
        ),
    )
}

/// Squared no-symmetry representative distance with an element applied to
/// the second pose.
fn nonsym_dist(p1: &Pose, p2: &Pose, h: &Rotation, lambda: &Mat3) -> f64 {
    let m1 = p1.rotation.matrix() * lambda;
    let m2 = p2.rotation.matrix() * h.matrix() * lambda;
    let dt = p1.translation - p2.translation;
    ((m1 - m2).norm_squared() + dt.norm_squared()).sqrt()
}

/// Dense scan over z-rotations at the given step, followed by a ternary
/// refinement inside the best bracket.
fn revolution_bruteforce(
    p1: &Pose,
    p2: &Pose,
    lambda: &Mat3,
    with_flip: bool,
    step_deg: f64,
) -> f64 {
    let (lr, lz) = revolution_scalars(lambda);
    let lambda_rev = Mat3::from_diagonal(&Vec3::new(lr, lr, lz));
    let flips: &[Rotation] = if with_flip {
        &[Rotation::identity(), Rotation::rot_y(std::f64::consts::PI)]
    } else {
        &[Rotation::identity()]
    };
    let steps = (360.0 / step_deg) as usize;
    let mut best = f64::INFINITY;
    for flip in flips {
        let eval = |theta: f64| {
            let h = Rotation::rot_z(theta) * *flip;
            nonsym_dist(p1, p2, &h, &lambda_rev)
        };
        let mut best_theta = 0.0;
        let mut best_here = f64::INFINITY;
        for i in 0..steps {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
            let d = eval(theta);
            if d < best_here {
                best_here = d;
                best_theta = theta;
            }
        }
        // Ternary search within the bracketing interval.
        let width = 2.0 * std::f64::consts::PI / steps as f64;
        let (mut lo, mut hi) = (best_theta - width, best_theta + width);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if eval(m1) <= eval(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        best = best.min(eval((lo + hi) / 2.0)).min(best_here);
    }
    best
}

fn d4_group() -> Vec<Rotation> {
    let mut rotations = Vec::new();
    for k in 0..4 {
        let rz = Rotation::rot_z(std::f64::consts::FRAC_PI_2 * k as f64);
        rotations.push(rz);
        rotations.push(Rotation::rot_x(std::f64::consts::PI) * rz);
    }
    rotations
}

#[test]
fn criterion_1_pose_distance_matches_bruteforce() {
    let start = Instant::now();
    // Moment matrices consistent with each symmetry class (diagonal, so
    // they commute with the group elements exactly).
    let axial = Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.05));
    let generic = Mat3::from_diagonal(&Vec3::new(0.02, 0.035, 0.05));
    let classes: Vec<(&str, SymmetryClass, Mat3)> = vec![
        ("finite_z2", SymmetryClass::FiniteZ { order: 2 }, axial),
        ("finite_z4", SymmetryClass::FiniteZ { order: 4 }, axial),
        ("finite_z6", SymmetryClass::FiniteZ { order: 6 }, axial),
        (
            "d4",
            SymmetryClass::FiniteGroup { rotations: d4_group() },
            axial,
        ),
        ("revolution", SymmetryClass::Revolution, axial),
        (
            "rotoreflection",
            SymmetryClass::RevolutionRotoreflection,
            axial,
        ),
        ("spherical", SymmetryClass::Spherical, Mat3::identity() * 0.04),
        ("non_symmetric", SymmetryClass::NonSymmetric, generic),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for (name, sym, lambda) in &classes {
        for _ in 0..1000 {
            let p1 = random_pose(&mut rng);
            let p2 = random_pose(&mut rng);
            let got = pose_distance(&p1, &p2, sym, lambda);
            let oracle = match sym {
                SymmetryClass::Spherical => (p1.translation - p2.translation).norm(),
                SymmetryClass::NonSymmetric => {
                    nonsym_dist(&p1, &p2, &Rotation::identity(), lambda)
                }
                SymmetryClass::Revolution => {
                    revolution_bruteforce(&p1, &p2, lambda, false, 0.1)
                }
                SymmetryClass::RevolutionRotoreflection => {
                    revolution_bruteforce(&p1, &p2, lambda, true, 0.1)
                }
                _ => {
                    let elements = sym.elements().unwrap();
                    elements
                        .iter()
                        .map(|h| nonsym_dist(&p1, &p2, h, lambda))
                        .fold(f64::INFINITY, f64::min)
                }
            };
            let rel = (got - oracle).abs() / got.max(oracle).max(1e-12);
            assert!(
                rel <= 1e-6,
                "{name}: distance {got} vs oracle {oracle} (rel {rel:.3e})"
            );
            worst = worst.max(rel);
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs() < 60, "criterion 1 overran: {dt:?}");
    println!(
        "criterion 1 (pose-distance oracle equivalence, 8 classes x 1000 pairs, \
         worst rel err {worst:.2e}, {dt:.1?}): PASS"
    );
}

// ---------------------------------------------------------------------
// Criterion 2: unification idempotence and symmetry membership.
// ---------------------------------------------------------------------

#[test]
fn criterion_2_unification_suite() {
    let start = Instant::now();
    let classes: Vec<(&str, SymmetryClass)> = vec![
        ("non_symmetric", SymmetryClass::NonSymmetric),
        ("spherical", SymmetryClass::Spherical),
        ("revolution", SymmetryClass::Revolution),
        ("rotoreflection", SymmetryClass::RevolutionRotoreflection),
        ("finite_z2", SymmetryClass::FiniteZ { order: 2 }),
        ("finite_z4", SymmetryClass::FiniteZ { order: 4 }),
        ("finite_z6", SymmetryClass::FiniteZ { order: 6 }),
        ("d4", SymmetryClass::FiniteGroup { rotations: d4_group() }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for (name, sym) in &classes {
        for i in 0..10_000 {
            let p = random_pose(&mut rng);
            let u1 = unify_orientation(&p, sym);
            let u2 = unify_orientation(&u1, sym);
            assert!(
                u1.rotation.max_abs_diff(&u2.rotation) <= 1e-9,
                "{name} pose {i}: unification not idempotent"
            );
            assert_eq!(u1.translation, p.translation);
            // Membership: the relative rotation is a symmetry element.
            let rel = p.rotation.inverse() * u1.rotation;
            let ok = match sym {
                SymmetryClass::NonSymmetric => {
                    rel.max_abs_diff(&Rotation::identity()) <= 1e-6
                }
                SymmetryClass::Spherical => {
                    u1.rotation.max_abs_diff(&Rotation::identity()) == 0.0
                }
                SymmetryClass::Revolution => {
                    // A rotation about z: it fixes e_z and is orthonormal.
                    (rel * Vec3::z() - Vec3::z()).norm() <= 1e-6
                }
                SymmetryClass::RevolutionRotoreflection => {
                    let axis = rel * Vec3::z();
                    (axis - Vec3::z()).norm() <= 1e-6 || (axis + Vec3::z()).norm() <= 1e-6
                }
                _ => {
                    let elements = sym.elements().unwrap();
                    elements.iter().any(|h| rel.max_abs_diff(h) <= 1e-6)
                }
            };
            assert!(ok, "{name} pose {i}: output left the symmetry orbit");
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs() < 30, "criterion 2 overran: {dt:?}");
    println!(
        "criterion 2 (unification idempotence + membership, 8 classes x 10k poses, {dt:.1?}): PASS"
    );
}

// ---------------------------------------------------------------------
// Criterion 3: codec round trip over the full fixture dataset.
// ---------------------------------------------------------------------

#[test]
fn criterion_3_codec_round_trip_on_dataset() {
    let fx = fixture();
    let ds = Dataset::open(&fx.data).unwrap();
    let cfg = ds.codec();
    let mut recovered = 0usize;
    let mut cells_total = 0usize;
    for i in 0..ds.scene_count() {
        let (record, _) = ds.load_scene(i).unwrap();
        let (gt, _) =
            encode_ground_truth(&record.objects, record.placements.as_deref(), cfg).unwrap();
        let candidates = decode(&gt.tensor, cfg, 0.5);
        assert_eq!(
            candidates.len(),
            gt.presence_mask.count(),
            "scene {i}: decoded candidate count mismatch"
        );
        for cand in &candidates {
            let inst = gt.cell_instance[cand.cell].expect("winner recorded");
            let obj = record
                .objects
                .iter()
                .find(|o| o.instance_id == inst)
                .unwrap();
            assert_eq!(cand.class_id, obj.class_id, "scene {i} cell {}", cand.cell);
            let dt = (cand.pose.translation - obj.pose.translation).norm();
            assert!(dt < 1e-9, "scene {i}: translation error {dt}");
            let angle = (cand.pose.rotation.inverse() * obj.pose.rotation).angle_accurate();
            assert!(angle < 1e-9, "scene {i}: rotation error {angle}");
            recovered += 1;
        }
        cells_total += gt.presence_mask.count();
    }
    assert_eq!(recovered, cells_total);
    assert!(recovered > 5_000, "suspiciously few objects: {recovered}");
    println!(
        "criterion 3 (codec round trip, {recovered} objects over 500 scenes, \
         pose error < 1e-9): PASS"
    );
}

// ---------------------------------------------------------------------
// Criterion 4: reverse-mode gradient vs central finite differences.
// ---------------------------------------------------------------------

#[test]
fn criterion_4_gradient_check() {
    let start = Instant::now();
    let fx = fixture();
    let ds = Dataset::open(&fx.data).unwrap();
    let cfg = ds.codec().clone();
    let samples = ds.train_samples().unwrap();
    let classes = &ds.classes;
    let arch = ArchSpec::standard(128, cfg.s, cfg.channels());
    let net = MiniFcn::new(arch, cfg, 4242).unwrap();
    let weights = LossWeights::default();
    let mut total_checked = 0;
    let mut total_skipped = 0;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for batch_idx in 0..3 {
        let a = rng.random_range(0..samples.len());
        let b = rng.random_range(0..samples.len());
        let batch: Vec<&TrainSample> = vec![&samples[a], &samples[b]];
        let report = gradient_check(
            &net,
            &batch,
            &weights,
            classes,
            70,
            1e-4,
            derive_seed(404, "fd", batch_idx),
        )
        .unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "batch {batch_idx}: {report:?}"
        );
        total_checked += report.checked;
        total_skipped += report.skipped_kinks;
        worst = worst.max(report.max_rel_error);
    }
    assert!(total_checked >= 200);
    let dt = start.elapsed();
    assert!(dt.as_secs() < 300, "criterion 4 overran: {dt:?}");
    println!(
        "criterion 4 (gradient check, {total_checked} params over 3 batches, \
         max rel err {worst:.2e}, {total_skipped} kink stencils skipped, {dt:.1?}): PASS"
    );
}

// ---------------------------------------------------------------------
// Criterion 5: overfit run on 16 samples.
// ---------------------------------------------------------------------

#[test]
fn criterion_5_overfit_run() {
    let start = Instant::now();
    let fx = fixture();
    let ds = Dataset::open(&fx.data).unwrap();
    let cfg = ds.codec().clone();
    let all = ds.train_samples().unwrap();
    let samples: Vec<TrainSample> = all.into_iter().take(16).collect();
    let classes = ds.classes.clone();
    let arch = ArchSpec::standard(128, cfg.s, cfg.channels());
    let mut net = MiniFcn::new(arch, cfg.clone(), 31_337).unwrap();
    let train_cfg = TrainConfig {
        epochs: 2000,
        batch_size: 16,
        learning_rate: 1.5e-3,
        optimizer: OptimizerKind::Adam,
        seed: 7,
        max_steps: Some(2000),
        ..TrainConfig::default()
    };
    let history = train(
        &mut net,
        &samples,
        &train_cfg,
        &LossWeights::default(),
        &classes,
        &binpick_core::augment::BackgroundStore::empty(),
        &binpick_core::augment::AugmentConfig::identity(),
    )
    .unwrap();
    let first = history.first().unwrap().total;
    let last = history.last().unwrap().total;
    assert!(
        last <= 0.1 * first,
        "loss only reached {last:.4} from {first:.4} ({:.1}%)",
        100.0 * last / first
    );

    // Every visible object must be recovered with a correct pose.
    let mut checked_objects = 0usize;
    for (si, sample) in samples.iter().enumerate() {
        let (record, _) = ds.load_scene(si).unwrap();
        let tensor = net.forward(&sample.image);
        let candidates = decode(&tensor, &cfg, 0.5);
        for obj in &record.objects {
            if obj.visibility < 0.5 {
                continue;
            }
            let geom = &classes[obj.class_id as usize];
            let best = candidates
                .iter()
                .map(|c| geom.relative_pose_distance(&c.pose, &obj.pose).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(
                best < 1.0,
                "scene {si} instance {}: best relative distance {best:.3}",
                obj.instance_id
            );
            checked_objects += 1;
        }
    }
    assert!(checked_objects > 0);
    let dt = start.elapsed();
    assert!(dt.as_secs() < 900, "criterion 5 overran: {dt:?}");
    println!(
        "criterion 5 (overfit: loss {first:.3} -> {last:.3} in {} steps, \
         {checked_objects} visible objects all at d < 1, {dt:.1?}): PASS",
        history.len()
    );
}

// ---------------------------------------------------------------------
// Criterion 6: policy argmax vs exhaustive enumeration.
// ---------------------------------------------------------------------

#[test]
fn criterion_6_policy_matches_enumeration() {
    use binpick_core::codec::{OutputTensor, CH_CLASS, CH_DO, CH_P};
    let cfg = CodecConfig::new(
        16,
        VolumeBounds {
            x: (-0.25, 0.25),
            y: (-0.25, 0.25),
            z: (0.4, 1.2),
        },
        vec![
            ClassCodec {
                class_id: 0,
                blocks: vec![("cup".into(), 12), ("pj".into(), 12)],
            },
            ClassCodec {
                class_id: 1,
                blocks: vec![("cup".into(), 17)],
            },
            ClassCodec {
                class_id: 2,
                blocks: vec![("pj".into(), 9)],
            },
        ],
        1.0,
    );
    assert_eq!((cfg.s, cfg.c, cfg.k_max), (16, 3, 24));
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for case in 0..1000 {
        let mut t = OutputTensor::zeros(&cfg);
        for i in 0..cfg.cells() {
            let c = t.cell_mut(i);
            c[CH_P] = rng.random_range(0.0..1.0);
            c[CH_DO] = rng.random_range(0.0..2.0);
            let mut rest = 1.0f64;
            for j in 0..cfg.c - 1 {
                let v = rng.random_range(0.0..rest);
                c[CH_CLASS + j] = v;
                rest -= v;
            }
            c[CH_CLASS + cfg.c - 1] = rest;
            for v in &mut c[CH_CLASS + cfg.c..] {
                *v = rng.random_range(0.0..1.0);
            }
        }
        for variant in [PolicyVariant::Full, PolicyVariant::NoOpeScore] {
            let got = select(&t, &cfg, variant, 0.5).unwrap();
            // Exhaustive oracle with the same tie rule: first strict
            // maximum in (cell, grasp) order.
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..cfg.cells() {
                let c = t.cell(i);
                if c[CH_P] < 0.5 {
                    continue;
                }
                let mut class = 0;
                let mut class_v = f64::NEG_INFINITY;
                for j in 0..cfg.c {
                    if c[CH_CLASS + j] > class_v {
                        class_v = c[CH_CLASS + j];
                        class = j;
                    }
                }
                for k in 0..cfg.classes[class].k_total() {
                    let d_p = c[CH_CLASS + cfg.c + k];
                    let s_p = 1.0 - d_p;
                    let score = match variant {
                        PolicyVariant::Full => c[CH_P] * (-0.5 * c[CH_DO]).exp() * s_p,
                        PolicyVariant::NoOpeScore => c[CH_P] * s_p,
                    };
                    if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                        best = Some((score, i, k));
                    }
                }
            }
            match (got, best) {
                (None, None) => {}
                (Some(sel), Some((score, cell, k))) => {
                    assert_eq!(
                        (sel.cell, sel.grasp_index),
                        (cell, k),
                        "case {case} {variant:?}"
                    );
                    assert!((sel.score - score).abs() < 1e-12);
                }
                (a, b) => panic!("case {case}: {a:?} vs {b:?}"),
            }
        }
    }
    println!("criterion 6 (policy argmax vs enumeration, 1000 tensors x 2 variants): PASS");
}

// ---------------------------------------------------------------------
// Criterion 7: metric correctness (AP + ADI).
// ---------------------------------------------------------------------

#[test]
fn criterion_7_metric_correctness() {
    let geom = ClassGeometry {
        class_id: 0,
        name: "ball".into(),
        diameter: 0.05,
        lambda: Mat3::identity() * 0.016,
        symmetry: SymmetryClass::Spherical,
        surface_samples: vec![],
        hook_like: false,
    };
    let classes = vec![geom];
    let gt = |id: u32, x: f64| GtInstance {
        instance_id: id,
        class_id: 0,
        pose: Pose::from_translation(Vec3::new(x, 0.0, 0.0)),
        visibility: 1.0,
    };
    let est = |x: f64, conf: f64| PoseEstimate {
        class_id: 0,
        confidence: conf,
        pose: Pose::from_translation(Vec3::new(x, 0.0, 0.0)),
    };

    // All-correct set.
    let gts = vec![gt(0, 0.0), gt(1, 0.5), gt(2, 1.0)];
    let ests = vec![est(0.0, 0.9), est(0.5, 0.8), est(1.0, 0.7)];
    let ap = ap_evaluate(&ests, &gts, &classes, 0.5).unwrap().mean_ap;
    assert!((ap - 1.0).abs() < 1e-12, "all-correct AP = {ap}");

    // 3 TP + 1 FP interleaved: hand-computed all-points area is 5/6.
    let ests = vec![est(0.0, 0.9), est(9.0, 0.8), est(0.5, 0.7), est(1.0, 0.6)];
    let ap = ap_evaluate(&ests, &gts, &classes, 0.5).unwrap().mean_ap;
    assert!(
        (ap - 5.0 / 6.0).abs() < 1e-9,
        "interleaved AP {ap} vs hand-computed {}",
        5.0 / 6.0
    );

    // ADI at identity and under a symmetry-element rotation.
    let pin = binpick_core::object::ObjectModel::build(
        0,
        "pin",
        binpick_core::mesh::shapes::make_cylinder(0.012, 0.05, 96),
        SymmetryClass::RevolutionRotoreflection,
        false,
        &binpick_core::object::ObjectBuildOptions {
            lambda_samples: 2000,
            surface_samples: 1000,
            seed: 1,
        },
    )
    .unwrap();
    let points: Vec<Vec3> = pin
        .mesh
        .sample_surface(1000, 9)
        .unwrap()
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let pose = Pose::from_parts(
        Rotation::from_euler_zyx(0.3, -0.7, 1.2),
        Vec3::new(0.02, -0.04, 0.8),
    );
    assert_eq!(adi(&pose, &pose, &points), 0.0);
    let spun = Pose::from_parts(pose.rotation * Rotation::rot_z(2.1), pose.translation);
    let d = adi(&spun, &pose, &points);
    assert!(
        d <= 0.02 * pin.diameter,
        "ADI under symmetry rotation: {d} vs {}",
        0.02 * pin.diameter
    );
    println!(
        "criterion 7 (AP all-correct = 1, interleaved AP = 5/6 within 1e-9, \
         ADI identity = 0, symmetry ADI {d:.2e} <= 0.02 D): PASS"
    );
}

// ---------------------------------------------------------------------
// Criterion 8: regression labels vs binary labels, directional result.
// ---------------------------------------------------------------------

#[test]
fn criterion_8_regression_beats_binary_labels_on_mean_dp() {
    let start = Instant::now();
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();

    let train_with = |binary: bool, out: &std::path::Path| {
        let cfg = TrainFileConfig {
            train: TrainConfig {
                epochs: 100,
                batch_size: 16,
                learning_rate: 1e-3,
                optimizer: OptimizerKind::Adam,
                seed: 11,
                max_steps: Some(2500),
                binary_labels: binary,
                ..TrainConfig::default()
            },
            ..TrainFileConfig::default()
        };
        train_model(&fx.data, &cfg, out).unwrap()
    };
    let reg_model = dir.path().join("regression.bin");
    let bin_model = dir.path().join("binary.bin");
    let reg_summary = train_with(false, &reg_model);
    let bin_summary = train_with(true, &bin_model);
    assert!(reg_summary.final_loss < reg_summary.first_loss);
    assert!(bin_summary.final_loss < bin_summary.first_loss);

    let full = evaluate(
        &fx.data,
        &reg_model,
        &EvalOptions {
            variant: PolicyVariant::Full,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    let baseline = evaluate(
        &fx.data,
        &bin_model,
        &EvalOptions {
            variant: PolicyVariant::NoOpeScore,
            ..EvalOptions::default()
        },
    )
    .unwrap();

    let dt = start.elapsed();
    println!(
        "criterion 8 numbers: full-variant mean d_p {:.3} (success {:.3}), \
         binary baseline mean d_p {:.3} (success {:.3}), {dt:.1?}",
        full.placement.mean_relative_d_p,
        full.placement.success_rate,
        baseline.placement.mean_relative_d_p,
        baseline.placement.success_rate,
    );
    assert!(
        full.placement.mean_relative_d_p < baseline.placement.mean_relative_d_p,
        "regression labels did not improve mean placement distance: {} vs {}",
        full.placement.mean_relative_d_p,
        baseline.placement.mean_relative_d_p
    );
    assert!(
        (full.placement.success_rate - baseline.placement.success_rate).abs() <= 0.05,
        "success rates diverged: {} vs {}",
        full.placement.success_rate,
        baseline.placement.success_rate
    );
    assert!(dt.as_secs() < 3600, "criterion 8 overran: {dt:?}");
    println!(
        "criterion 8 (mean selected d_p: {:.3} < {:.3}, success rates within 0.05, {dt:.1?}): PASS",
        full.placement.mean_relative_d_p, baseline.placement.mean_relative_d_p
    );
}

// ---------------------------------------------------------------------
// Criterion 9: end-to-end bit reproducibility.
// ---------------------------------------------------------------------

#[test]
fn criterion_9_full_pipeline_is_bit_reproducible() {
    let library = common::demo_library();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (PathBuf, PathBuf, PathBuf) {
        let root = dir.path().join(tag);
        let data = root.join("data");
        let master = 777_000;
        scenes_gen(
            &library,
            &ScenesGenOptions {
                cycles: 2,
                drop_limit: 5,
                seed: master,
                annotate_fraction: Some(1.0),
                jobs: 0,
            },
            &data,
        )
        .unwrap();
        let model = root.join("model.bin");
        train_model(
            &data,
            &TrainFileConfig {
                train: TrainConfig {
                    epochs: 5,
                    batch_size: 5,
                    learning_rate: 1e-3,
                    optimizer: OptimizerKind::Adam,
                    seed: derive_seed(master, "train", 0),
                    max_steps: Some(10),
                    ..TrainConfig::default()
                },
                ..TrainFileConfig::default()
            },
            &model,
        )
        .unwrap();
        let report = root.join("report.json");
        let eval = evaluate(&data, &model, &EvalOptions::default()).unwrap();
        std::fs::write(&report, serde_json::to_string_pretty(&eval).unwrap()).unwrap();
        (data, model, report)
    };
    let (data_a, model_a, report_a) = run("a");
    let (data_b, model_b, report_b) = run("b");
    // Datasets byte-identical, file by file.
    let mut names: Vec<_> = std::fs::read_dir(&data_a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 20);
    for name in names {
        let a = std::fs::read(data_a.join(&name)).unwrap();
        let b = std::fs::read(data_b.join(&name)).unwrap();
        assert_eq!(a, b, "dataset file {name:?} differs");
    }
    assert_eq!(
        std::fs::read(&model_a).unwrap(),
        std::fs::read(&model_b).unwrap(),
        "model files differ"
    );
    assert_eq!(
        std::fs::read(&report_a).unwrap(),
        std::fs::read(&report_b).unwrap(),
        "reports differ"
    );
    println!("criterion 9 (end-to-end bit reproducibility: dataset, model, report): PASS");
}

// ---------------------------------------------------------------------
// Supporting check: generation failure surfaces as a structured error.
// ---------------------------------------------------------------------

#[test]
fn unsatisfiable_scenes_surface_cleanly() {
    let mut library = common::demo_library();
    library.config.bin.inner_length = 0.04;
    library.config.bin.inner_width = 0.04;
    let dir = tempfile::tempdir().unwrap();
    let err = scenes_gen(
        &library,
        &ScenesGenOptions {
            cycles: 1,
            drop_limit: 3,
            seed: 1,
            annotate_fraction: Some(0.0),
            jobs: 1,
        },
        &dir.path().join("data"),
    );
    assert!(matches!(err, Err(Error::Unsatisfiable(_))));
}
