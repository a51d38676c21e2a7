//! Evaluation harness: symmetry-aware average precision, ADI, and
//! classification/placement statistics.

use serde::{Deserialize, Serialize};

use crate::geom::{Pose, Vec3};
use crate::object::ClassGeometry;
use crate::Result;

/// A pose estimate entering the evaluation (confidence is the presence
/// estimate of its cell).
#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub class_id: u32,
    pub confidence: f64,
    pub pose: Pose,
}

/// A ground-truth instance.
#[derive(Debug, Clone)]
pub struct GtInstance {
    pub instance_id: u32,
    pub class_id: u32,
    pub pose: Pose,
    pub visibility: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub ap: f64,
    /// Scoring ground-truth count (visibility at or above the threshold).
    pub n_gt: usize,
    /// Raw precision-recall points in detection order.
    pub pr: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApReport {
    pub per_class: Vec<ClassAp>,
    /// Mean over classes that have scoring ground truth.
    pub mean_ap: f64,
}

/// One detection after matching: kept for the precision-recall curve.
/// Detections consumed by ignorable ground truth never produce an outcome.
#[derive(Debug, Clone, Copy)]
pub struct DetectionOutcome {
    pub class_id: u32,
    pub confidence: f64,
    pub true_positive: bool,
}

/// Greedy one-to-one matching of one scene's estimates against its ground
/// truth, class by class.
///
/// Estimates are processed in confidence order and matched to the closest
/// correct (relative pose distance below 1) unmatched ground truth of the
/// same class. Ground truth below `v_min` is ignorable: a detection it
/// absorbs neither scores nor penalizes, and it never counts toward
/// recall. Returns the kept outcomes and the per-class scoring ground
/// truth counts.
pub fn match_detections(
    estimates: &[PoseEstimate],
    gts: &[GtInstance],
    classes: &[ClassGeometry],
    v_min: f64,
) -> Result<(Vec<DetectionOutcome>, Vec<usize>)> {
    let mut outcomes = Vec::new();
    let mut n_pos = vec![0usize; classes.len()];
    let mut matched = vec![false; gts.len()];
    for geom in classes {
        let class_id = geom.class_id;
        n_pos[class_id as usize] = gts
            .iter()
            .filter(|g| g.class_id == class_id && g.visibility >= v_min)
            .count();
        let mut order: Vec<usize> = (0..estimates.len())
            .filter(|&i| estimates[i].class_id == class_id)
            .collect();
        order.sort_by(|&a, &b| {
            estimates[b]
                .confidence
                .partial_cmp(&estimates[a].confidence)
                .unwrap()
                .then(a.cmp(&b))
        });
        for &ei in &order {
            let est = &estimates[ei];
            // Best correct unmatched ground truth, preferring scoring ones.
            let mut best: Option<(bool, f64, usize)> = None;
            for (gi, gt) in gts.iter().enumerate() {
                if matched[gi] || gt.class_id != class_id {
                    continue;
                }
                let d = geom.relative_pose_distance(&est.pose, &gt.pose)?;
                if d >= 1.0 {
                    continue;
                }
                let scoring = gt.visibility >= v_min;
                let better = match &best {
                    None => true,
                    Some((bs, bd, _)) => (scoring && !bs) || (scoring == *bs && d < *bd),
                };
                if better {
                    best = Some((scoring, d, gi));
                }
            }
            match best {
                Some((true, _, gi)) => {
                    matched[gi] = true;
                    outcomes.push(DetectionOutcome {
                        class_id,
                        confidence: est.confidence,
                        true_positive: true,
                    });
                }
                Some((false, _, gi)) => {
                    matched[gi] = true; // absorbed by ignorable ground truth
                }
                None => outcomes.push(DetectionOutcome {
                    class_id,
                    confidence: est.confidence,
                    true_positive: false,
                }),
            }
        }
    }
    Ok((outcomes, n_pos))
}

/// Builds per-class precision-recall curves and all-points interpolated AP
/// from pooled detection outcomes (typically accumulated over a dataset).
pub fn ap_from_outcomes(
    outcomes: &[DetectionOutcome],
    n_pos: &[usize],
    n_classes: usize,
) -> ApReport {
    let mut per_class = Vec::with_capacity(n_classes);
    let mut mean = 0.0;
    let mut scored_classes = 0usize;
    for class_id in 0..n_classes {
        let mut order: Vec<usize> = (0..outcomes.len())
            .filter(|&i| outcomes[i].class_id == class_id as u32)
            .collect();
        order.sort_by(|&a, &b| {
            outcomes[b]
                .confidence
                .partial_cmp(&outcomes[a].confidence)
                .unwrap()
                .then(a.cmp(&b))
        });
        let pos = n_pos.get(class_id).copied().unwrap_or(0);
        let mut pr = Vec::new();
        let mut tp_points = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        for &oi in &order {
            if outcomes[oi].true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            if pos > 0 {
                let recall = tp as f64 / pos as f64;
                let precision = tp as f64 / (tp + fp) as f64;
                pr.push((recall, precision));
                if outcomes[oi].true_positive {
                    tp_points.push((recall, precision));
                }
            }
        }
        let ap = if pos == 0 { 0.0 } else { all_points_ap(&pr, &tp_points) };
        if pos > 0 {
            mean += ap;
            scored_classes += 1;
        }
        per_class.push(ClassAp {
            class_id: class_id as u32,
            ap,
            n_gt: pos,
            pr,
        });
    }
    ApReport {
        per_class,
        mean_ap: if scored_classes > 0 {
            mean / scored_classes as f64
        } else {
            0.0
        },
    }
}

/// Average precision for a single scene (match, then integrate).
pub fn ap_evaluate(
    estimates: &[PoseEstimate],
    gts: &[GtInstance],
    classes: &[ClassGeometry],
    v_min: f64,
) -> Result<ApReport> {
    let (outcomes, n_pos) = match_detections(estimates, gts, classes, v_min)?;
    Ok(ap_from_outcomes(&outcomes, &n_pos, classes.len()))
}

/// Area under the interpolated precision envelope, summed over the recall
/// increments of the true-positive events.
fn all_points_ap(pr: &[(f64, f64)], tp_points: &[(f64, f64)]) -> f64 {
    if tp_points.is_empty() {
        return 0.0;
    }
    // Envelope: for each TP recall step, the best precision at any equal
    // or higher recall.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &(recall, _) in tp_points {
        let p_interp = pr
            .iter()
            .filter(|(r, _)| *r >= recall)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        ap += (recall - prev_recall) * p_interp;
        prev_recall = recall;
    }
    ap
}

/// Class-agnostic greedy matching (confidence order, symmetry-aware
/// correctness under the ground truth's own class geometry). Returns
/// `(estimate index, gt index)` pairs.
pub fn match_class_agnostic(
    estimates: &[PoseEstimate],
    gts: &[GtInstance],
    classes: &[ClassGeometry],
) -> Result<Vec<(usize, usize)>> {
    let mut order: Vec<usize> = (0..estimates.len()).collect();
    order.sort_by(|&a, &b| {
        estimates[b]
            .confidence
            .partial_cmp(&estimates[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut matched = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for &ei in &order {
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if matched[gi] {
                continue;
            }
            let geom = &classes[gt.class_id as usize];
            let d = geom.relative_pose_distance(&estimates[ei].pose, &gt.pose)?;
            if d < 1.0 && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, gi));
            }
        }
        if let Some((_, gi)) = best {
            matched[gi] = true;
            pairs.push((ei, gi));
        }
    }
    Ok(pairs)
}

/// Fraction of matched ground-truth objects (visibility at or above
/// `v_min`) whose predicted class is correct. The flag reports a zero
/// denominator (rate 0 by convention).
pub fn classification_success(
    pairs: &[(usize, usize)],
    estimates: &[PoseEstimate],
    gts: &[GtInstance],
    v_min: f64,
) -> (f64, usize) {
    let relevant: Vec<_> = pairs
        .iter()
        .filter(|(_, gi)| gts[*gi].visibility >= v_min)
        .collect();
    if relevant.is_empty() {
        return (0.0, 0);
    }
    let correct = relevant
        .iter()
        .filter(|(ei, gi)| estimates[*ei].class_id == gts[*gi].class_id)
        .count();
    (correct as f64 / relevant.len() as f64, relevant.len())
}

/// Average distance of model points under the indistinguishable-views
/// convention: the mean, over ground-truth-transformed points, of the
/// distance to the nearest estimate-transformed point.
pub fn adi(est: &Pose, gt: &Pose, points: &[Vec3]) -> f64 {
    assert!(!points.is_empty(), "adi needs model points");
    let est_pts: Vec<Vec3> = points.iter().map(|p| est.transform_point(p)).collect();
    let mut acc = 0.0;
    for p in points {
        let q = gt.transform_point(p);
        let mut best = f64::INFINITY;
        for e in &est_pts {
            let d = (q - e).norm_squared();
            if d < best {
                best = d;
            }
        }
        acc += best.sqrt();
    }
    acc / points.len() as f64
}

/// Placement outcome of one evaluated sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub scene: usize,
    /// False when the policy proposed nothing for this scene.
    pub selected: bool,
    /// Oracle placement distance of the selected grasp (d_max when the
    /// selection could not be resolved to an annotated grasp).
    pub d_p: f64,
    pub resolved: bool,
    /// Relative pose distance of the selected candidate's pose estimate.
    pub d_o: f64,
    pub ope_correct: bool,
    pub adi_correct: bool,
    pub selected_class: u32,
    pub gt_class: u32,
    pub gripper_id: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlacementStats {
    pub success_rate: f64,
    pub mean_relative_d_p: f64,
    pub samples: usize,
    pub unresolved: usize,
}

/// Success rate (`d_p < 1`) and mean relative placement distance over all
/// samples. Unresolved selections already carry `d_p = d_max`.
pub fn placement_report(rows: &[SampleRow]) -> PlacementStats {
    if rows.is_empty() {
        return PlacementStats::default();
    }
    let n = rows.len() as f64;
    let successes = rows.iter().filter(|r| r.d_p < 1.0).count();
    let mean = rows.iter().map(|r| r.d_p).sum::<f64>() / n;
    PlacementStats {
        success_rate: successes as f64 / n,
        mean_relative_d_p: mean,
        samples: rows.len(),
        unresolved: rows.iter().filter(|r| !r.resolved).count(),
    }
}

/// Full evaluation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub scenes: usize,
    pub per_class_ap: Vec<ClassAp>,
    pub mean_ap: f64,
    pub classification_rate: f64,
    pub classification_matched: usize,
    /// Success rates of the selected candidates' pose estimates.
    pub ope_success_rate: f64,
    pub ope_adi_success_rate: f64,
    pub mean_relative_d_o: f64,
    pub placement: PlacementStats,
    pub rows: Vec<SampleRow>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use crate::mesh::shapes;
    use crate::object::{ObjectBuildOptions, ObjectModel};
    use crate::symmetry::SymmetryClass;
    use crate::Mat3;
    use approx::assert_abs_diff_eq;

    fn ball_geom() -> ClassGeometry {
        ClassGeometry {
            class_id: 0,
            name: "ball".into(),
            diameter: 0.05,
            lambda: Mat3::identity() * 0.016,
            symmetry: SymmetryClass::Spherical,
            surface_samples: vec![],
            hook_like: false,
        }
    }

    fn gt_at(id: u32, x: f64, v: f64) -> GtInstance {
        GtInstance {
            instance_id: id,
            class_id: 0,
            pose: Pose::from_translation(Vec3::new(x, 0.0, 0.0)),
            visibility: v,
        }
    }

    fn est_at(x: f64, conf: f64) -> PoseEstimate {
        PoseEstimate {
            class_id: 0,
            confidence: conf,
            pose: Pose::from_translation(Vec3::new(x, 0.0, 0.0)),
        }
    }

    #[test]
    fn perfect_detections_give_unit_ap() {
        let classes = vec![ball_geom()];
        let gts = vec![gt_at(0, 0.0, 1.0), gt_at(1, 0.1, 1.0), gt_at(2, 0.2, 0.8)];
        let ests = vec![est_at(0.0, 0.9), est_at(0.1, 0.8), est_at(0.2, 0.7)];
        let report = ap_evaluate(&ests, &gts, &classes, 0.5).unwrap();
        assert_abs_diff_eq!(report.mean_ap, 1.0, epsilon = 1e-12);
        assert_eq!(report.per_class[0].n_gt, 3);
    }

    #[test]
    fn no_estimates_give_zero_ap() {
        let classes = vec![ball_geom()];
        let gts = vec![gt_at(0, 0.0, 1.0)];
        let report = ap_evaluate(&[], &gts, &classes, 0.5).unwrap();
        assert_eq!(report.mean_ap, 0.0);
    }

    #[test]
    fn interleaved_false_positive_matches_hand_computed_area() {
        // Confidence order: TP, FP, TP, TP over three ground truths.
        // Precision-recall points: (1/3, 1), fp, (2/3, 2/3), (1, 3/4).
        // Interpolated all-points area: 1/3 * 1 + 1/3 * 3/4 + 1/3 * 3/4
        // = 5/6, computed by hand.
        let classes = vec![ball_geom()];
        let gts = vec![gt_at(0, 0.0, 1.0), gt_at(1, 0.5, 1.0), gt_at(2, 1.0, 1.0)];
        let ests = vec![
            est_at(0.0, 0.9),  // TP
            est_at(5.0, 0.8),  // FP (far from everything)
            est_at(0.5, 0.7),  // TP
            est_at(1.0, 0.6),  // TP
        ];
        let report = ap_evaluate(&ests, &gts, &classes, 0.5).unwrap();
        assert_abs_diff_eq!(report.per_class[0].ap, 5.0 / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn ap_is_invariant_under_monotone_confidence_remap() {
        let classes = vec![ball_geom()];
        let gts = vec![gt_at(0, 0.0, 1.0), gt_at(1, 0.5, 1.0)];
        let ests = vec![est_at(0.0, 0.9), est_at(3.0, 0.5), est_at(0.5, 0.2)];
        let a = ap_evaluate(&ests, &gts, &classes, 0.5).unwrap().mean_ap;
        let remapped: Vec<PoseEstimate> = ests
            .iter()
            .map(|e| PoseEstimate {
                confidence: (e.confidence * 3.0).exp(),
                ..e.clone()
            })
            .collect();
        let b = ap_evaluate(&remapped, &gts, &classes, 0.5).unwrap().mean_ap;
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn low_visibility_gt_is_ignorable() {
        let classes = vec![ball_geom()];
        // One scoring GT, one nearly hidden GT.
        let gts = vec![gt_at(0, 0.0, 1.0), gt_at(1, 0.5, 0.1)];
        // Detect both: the hidden match must not score, the detection on
        // it must not penalize either.
        let ests = vec![est_at(0.0, 0.9), est_at(0.5, 0.8)];
        let report = ap_evaluate(&ests, &gts, &classes, 0.5).unwrap();
        assert_abs_diff_eq!(report.mean_ap, 1.0, epsilon = 1e-12);
        assert_eq!(report.per_class[0].n_gt, 1);
        // Missing the hidden object must not hurt recall.
        let report = ap_evaluate(&ests[..1], &gts, &classes, 0.5).unwrap();
        assert_abs_diff_eq!(report.mean_ap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn adi_zero_at_identity_and_bounded_by_translation() {
        let mesh = shapes::make_l_bracket(0.06, 0.02, 0.01);
        let obj = ObjectModel::build(
            0,
            "hook",
            mesh,
            SymmetryClass::NonSymmetric,
            true,
            &ObjectBuildOptions {
                lambda_samples: 2000,
                surface_samples: 500,
                seed: 0,
            },
        )
        .unwrap();
        let pts = obj.surface_samples.clone();
        let gt = Pose::from_parts(Rotation::rot_z(0.4), Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(adi(&gt, &gt, &pts), 0.0);
        let delta = Vec3::new(0.003, -0.001, 0.002);
        let est = Pose::from_parts(gt.rotation, gt.translation + delta);
        let d = adi(&est, &gt, &pts);
        assert!(d <= delta.norm() + 1e-12);
        assert!(d > 0.0);
    }

    #[test]
    fn adi_vanishes_under_symmetry_rotation() {
        // A cylinder rotated about its axis looks identical; ADI must stay
        // within sampling tolerance of zero.
        let mesh = shapes::make_cylinder(0.01, 0.05, 64);
        let obj = ObjectModel::build(
            0,
            "pin",
            mesh,
            SymmetryClass::RevolutionRotoreflection,
            false,
            &ObjectBuildOptions {
                lambda_samples: 2000,
                surface_samples: 1000,
                seed: 3,
            },
        )
        .unwrap();
        let pts = obj.surface_samples.clone();
        let gt = Pose::from_parts(Rotation::rot_x(0.7), Vec3::new(0.0, 0.1, 0.0));
        let est = Pose::from_parts(
            gt.rotation * Rotation::rot_z(1.2),
            gt.translation,
        );
        let d = adi(&est, &gt, &pts);
        assert!(
            d <= 0.02 * obj.diameter,
            "adi {d} vs tolerance {}",
            0.02 * obj.diameter
        );
    }

    #[test]
    fn classification_rate_counts_only_visible_matches() {
        let classes = vec![
            ball_geom(),
            ClassGeometry {
                class_id: 1,
                ..ball_geom()
            },
        ];
        let gts = vec![
            gt_at(0, 0.0, 1.0),
            GtInstance {
                instance_id: 1,
                class_id: 1,
                pose: Pose::from_translation(Vec3::new(0.5, 0.0, 0.0)),
                visibility: 0.9,
            },
            gt_at(2, 1.0, 0.2), // below threshold
        ];
        let ests = vec![
            est_at(0.0, 0.9), // correct class 0
            PoseEstimate {
                class_id: 0, // wrong class
                confidence: 0.8,
                pose: Pose::from_translation(Vec3::new(0.5, 0.0, 0.0)),
            },
            est_at(1.0, 0.7), // matches the invisible one
        ];
        let pairs = match_class_agnostic(&ests, &gts, &classes).unwrap();
        assert_eq!(pairs.len(), 3);
        let (rate, count) = classification_success(&pairs, &ests, &gts, 0.5);
        assert_eq!(count, 2);
        assert_abs_diff_eq!(rate, 0.5, epsilon = 1e-12);
        // Degenerate case: nothing matched.
        let (rate, count) = classification_success(&[], &ests, &gts, 0.5);
        assert_eq!((rate, count), (0.0, 0));
    }

    #[test]
    fn placement_rollup_matches_hand_values() {
        let mk = |d_p: f64, resolved: bool| SampleRow {
            scene: 0,
            selected: true,
            d_p,
            resolved,
            d_o: 0.0,
            ope_correct: true,
            adi_correct: true,
            selected_class: 0,
            gt_class: 0,
            gripper_id: "cup".into(),
        };
        let rows = vec![mk(0.0, true), mk(0.5, true), mk(1.5, false)];
        let stats = placement_report(&rows);
        assert_abs_diff_eq!(stats.success_rate, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.mean_relative_d_p, 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(stats.unresolved, 1);
        // All perfect.
        let rows = vec![mk(0.0, true), mk(0.0, true)];
        let stats = placement_report(&rows);
        assert_eq!(stats.success_rate, 1.0);
        assert_eq!(stats.mean_relative_d_p, 0.0);
        // Mean is permutation invariant.
        let rows_a = vec![mk(0.5, true), mk(1.5, true)];
        let rows_b = vec![mk(1.5, true), mk(0.5, true)];
        assert_eq!(
            placement_report(&rows_a).mean_relative_d_p,
            placement_report(&rows_b).mean_relative_d_p
        );
        assert_abs_diff_eq!(
            placement_report(&rows_a).success_rate,
            0.5,
            epsilon = 1e-12
        );
    }
}
