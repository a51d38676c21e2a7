//! Masked multi-task loss over grid tensors.
//!
//! Per cell `i` the loss combines
//!
//! ```text
//! l1 * L_p  +  [ l2 * L_pose + l3 * L_do + l4 * L_cls + l5 * L_dp ] * l6(v) * p_i
//! ```
//!
//! `L_p` is a binary cross-entropy over all cells; everything in brackets
//! only contributes where the ground-truth presence is 1, weighted by
//! `l6(v) = scale * v^exponent` so more visible objects dominate. `L_pose`
//! is the squared distance between pose representatives of the decoded
//! prediction and the ground truth, minimized over the ground-truth-side
//! symmetry branches (gradient flows through the selected branch). `L_do`
//! regresses the pose-distance estimate onto a dynamic target: the current
//! prediction's relative pose distance, treated as a constant during
//! differentiation. `L_dp` is additionally gated by the placement mask.

use serde::{Deserialize, Serialize};

use crate::codec::{CodecConfig, GtSample, OutputTensor, CH_CLASS, CH_DO, CH_P, CH_PHI, CH_X};
use crate::geom::{Mat3, Pose, Vec3};
use crate::object::ClassGeometry;
use crate::symmetry::{relative_pose_distance, revolution_lambda, SymmetryClass};
use crate::{Error, Result};

/// Probability clamp for both cross-entropies.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    /// `l6 = visibility_scale * v^visibility_exponent`.
    pub visibility_scale: f64,
    pub visibility_exponent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 0.1,
            l2: 0.5,
            l3: 0.01,
            l4: 0.01,
            l5: 0.5,
            visibility_scale: 8.0,
            visibility_exponent: 3.0,
        }
    }
}

impl LossWeights {
    pub fn visibility_weight(&self, v: f64) -> f64 {
        self.visibility_scale * v.powf(self.visibility_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.l1,
            self.l2,
            self.l3,
            self.l4,
            self.l5,
            self.visibility_scale,
            self.visibility_exponent,
        ];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Per-term sums. Each bracketed term already carries its per-cell
/// visibility weight; `total` recombines the terms with `l1..l5`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_p: f64,
    pub l_pose: f64,
    pub l_do: f64,
    pub l_cls: f64,
    pub l_dp: f64,
    pub presence_cells: usize,
    pub placement_cells: usize,
}

impl LossBreakdown {
    fn finalize(&mut self, w: &LossWeights) {
        self.total = w.l1 * self.l_p
            + w.l2 * self.l_pose
            + w.l3 * self.l_do
            + w.l4 * self.l_cls
            + w.l5 * self.l_dp;
    }

    pub fn accumulate(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.l_p += other.l_p;
        self.l_pose += other.l_pose;
        self.l_do += other.l_do;
        self.l_cls += other.l_cls;
        self.l_dp += other.l_dp;
        self.presence_cells += other.presence_cells;
        self.placement_cells += other.placement_cells;
    }

    pub fn scale(&mut self, f: f64) {
        self.total *= f;
        self.l_p *= f;
        self.l_pose *= f;
        self.l_do *= f;
        self.l_cls *= f;
        self.l_dp *= f;
    }
}

/// How the `L_do` regression targets are obtained.
pub enum DoTargets<'a> {
    /// Recompute from the current prediction (training-time behavior).
    Dynamic,
    /// Use precomputed per-cell targets. Required for finite-difference
    /// checks: the targets are constants of the loss by definition, so the
    /// difference stencil must hold them fixed.
    Frozen(&'a [f64]),
}

/// Relative pose distance between the decoded prediction and the ground
/// truth per presence cell (zero elsewhere). This is the dynamic `L_do`
/// target, evaluated with the ground-truth class's symmetry.
pub fn compute_do_targets(
    pred: &OutputTensor,
    gt: &GtSample,
    classes: &[ClassGeometry],
    cfg: &CodecConfig,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cfg.cells()];
    for i in 0..cfg.cells() {
        if gt.tensor.cell(i)[CH_P] != 1.0 {
            continue;
        }
        let class = gt.tensor.cell_class(i, cfg);
        let geom = &classes[class];
        let pred_pose = pred.cell_pose(i, cfg);
        let gt_pose = gt.tensor.cell_pose(i, cfg);
        out[i] = relative_pose_distance(
            &pred_pose,
            &gt_pose,
            &geom.symmetry,
            &geom.lambda,
            geom.diameter,
        )?;
    }
    Ok(out)
}

/// Loss value only.
pub fn loss(
    pred: &OutputTensor,
    gt: &GtSample,
    weights: &LossWeights,
    classes: &[ClassGeometry],
    cfg: &CodecConfig,
    do_targets: DoTargets<'_>,
) -> Result<LossBreakdown> {
    Ok(loss_impl(pred, gt, weights, classes, cfg, do_targets, None)?.0)
}

/// Loss value plus `d total / d pred` (the gradient with respect to the
/// head-activated output tensor).
pub fn loss_with_grad(
    pred: &OutputTensor,
    gt: &GtSample,
    weights: &LossWeights,
    classes: &[ClassGeometry],
    cfg: &CodecConfig,
    do_targets: DoTargets<'_>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grad = vec![0.0; pred.data.len()];
    let (bd, _) = loss_impl(pred, gt, weights, classes, cfg, do_targets, Some(&mut grad))?;
    Ok((bd, grad))
}

fn loss_impl(
    pred: &OutputTensor,
    gt: &GtSample,
    weights: &LossWeights,
    classes: &[ClassGeometry],
    cfg: &CodecConfig,
    do_targets: DoTargets<'_>,
    mut grad: Option<&mut [f64]>,
) -> Result<(LossBreakdown, ())> {
    if !pred.matches(cfg) || !gt.tensor.matches(cfg) {
        return Err(Error::invalid("tensor shape does not match codec config"));
    }
    weights.validate()?;
    if classes.len() != cfg.c {
        return Err(Error::config("class geometry count mismatch"));
    }
    let channels = cfg.channels();
    let mut bd = LossBreakdown::default();
    for i in 0..cfg.cells() {
        let pc = pred.cell(i);
        let gc = gt.tensor.cell(i);
        let base = i * channels;
        let p_gt = gc[CH_P];

        // Presence BCE over every cell.
        let p_hat = pc[CH_P].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        bd.l_p += -(p_gt * p_hat.ln() + (1.0 - p_gt) * (1.0 - p_hat).ln());
        if let Some(g) = grad.as_deref_mut() {
            if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pc[CH_P]) {
                g[base + CH_P] = weights.l1 * (-p_gt / p_hat + (1.0 - p_gt) / (1.0 - p_hat));
            }
        }
        if p_gt != 1.0 {
            continue;
        }
        bd.presence_cells += 1;
        let w6 = weights.visibility_weight(gt.visibility[i]);
        let class = gt.tensor.cell_class(i, cfg);
        let geom = &classes[class];

        // Pose term on the decoded pose, through the selected symmetry
        // branch.
        let gt_pose = gt.tensor.cell_pose(i, cfg);
        let pose = pose_term(pc, &gt_pose, geom, cfg);
        bd.l_pose += w6 * pose.value;
        if let Some(g) = grad.as_deref_mut() {
            let f = weights.l2 * w6;
            for k in 0..3 {
                g[base + CH_X + k] += f * pose.d_position[k];
                g[base + CH_PHI + k] += f * pose.d_angles[k];
            }
        }

        // Pose-distance regression with a dynamic (stop-gradient) target.
        let target = match &do_targets {
            DoTargets::Dynamic => {
                let pred_pose = pred.cell_pose(i, cfg);
                relative_pose_distance(
                    &pred_pose,
                    &gt_pose,
                    &geom.symmetry,
                    &geom.lambda,
                    geom.diameter,
                )?
            }
            DoTargets::Frozen(t) => t[i],
        };
        let d_hat = pc[CH_DO];
        bd.l_do += w6 * (d_hat - target) * (d_hat - target);
        if let Some(g) = grad.as_deref_mut() {
            g[base + CH_DO] += weights.l3 * w6 * 2.0 * (d_hat - target);
        }

        // Categorical cross-entropy.
        for j in 0..cfg.c {
            let y = gc[CH_CLASS + j];
            if y == 0.0 {
                continue;
            }
            let c_hat = pc[CH_CLASS + j].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            bd.l_cls += w6 * (-y * c_hat.ln());
            if let Some(g) = grad.as_deref_mut() {
                if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pc[CH_CLASS + j]) {
                    g[base + CH_CLASS + j] += weights.l4 * w6 * (-y / c_hat);
                }
            }
        }

        // Placement distances, gated by the annotation mask.
        if gt.placement_mask.get(i) {
            bd.placement_cells += 1;
            for j in CH_CLASS + cfg.c..channels {
                let diff = pc[j] - gc[j];
                bd.l_dp += w6 * diff * diff;
                if let Some(g) = grad.as_deref_mut() {
                    g[base + j] += weights.l5 * w6 * 2.0 * diff;
                }
            }
        }
    }
    bd.finalize(weights);
    Ok((bd, ()))
}

/// Hash of every non-smooth decision the loss makes for this prediction:
/// selected pose branches, probability-clamp indicators, and the d_o head
/// sign. Two parameter points with equal net activation signatures and
/// equal loss signatures lie in the same smooth region, which is what a
/// central-difference stencil requires.
pub fn kink_signature(
    pred: &OutputTensor,
    gt: &GtSample,
    classes: &[ClassGeometry],
    cfg: &CodecConfig,
) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut feed = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for i in 0..cfg.cells() {
        let pc = pred.cell(i);
        feed(u64::from(pc[CH_P] < PROB_CLAMP || pc[CH_P] > 1.0 - PROB_CLAMP));
        if gt.tensor.cell(i)[CH_P] != 1.0 {
            continue;
        }
        let class = gt.tensor.cell_class(i, cfg);
        let geom = &classes[class];
        let gt_pose = gt.tensor.cell_pose(i, cfg);
        let term = pose_term(pc, &gt_pose, geom, cfg);
        feed(term.branch as u64);
        feed(u64::from(pc[CH_DO] > 0.0));
        for j in 0..cfg.c {
            let v = pc[CH_CLASS + j];
            feed(u64::from(v < PROB_CLAMP || v > 1.0 - PROB_CLAMP));
        }
    }
    h
}

struct PoseTerm {
    value: f64,
    /// Gradient with respect to the normalized position channels.
    d_position: [f64; 3],
    /// Gradient with respect to the scaled angle channels.
    d_angles: [f64; 3],
    /// Index of the selected symmetry branch.
    branch: usize,
}

/// Squared representative distance between the cell's decoded pose and the
/// ground-truth pose, minimized over the ground-truth-side symmetry
/// branches. Returns the value and its gradient with respect to the six
/// pose channels.
fn pose_term(cell: &[f64], gt_pose: &Pose, geom: &ClassGeometry, cfg: &CodecConfig) -> PoseTerm {
    let pi = std::f64::consts::PI;
    // Decode translation and keep the channel-to-meter scales.
    let spans = [
        (cfg.volume.x.1 - cfg.volume.x.0) / 2.0,
        (cfg.volume.y.1 - cfg.volume.y.0) / 2.0,
        (cfg.volume.z.1 - cfg.volume.z.0) / 2.0,
    ];
    let t = Vec3::new(
        cfg.volume.x.0 + (cell[CH_X] + 1.0) * spans[0],
        cfg.volume.y.0 + (cell[CH_X + 1] + 1.0) * spans[1],
        cfg.volume.z.0 + (cell[CH_X + 2] + 1.0) * spans[2],
    );
    let dt = t - gt_pose.translation;
    let mut value = dt.norm_squared();
    let mut d_position = [0.0; 3];
    for k in 0..3 {
        d_position[k] = 2.0 * dt[k] * spans[k];
    }

    // Rotation part with analytic derivatives through the Euler chain.
    let angles = [cell[CH_PHI] * pi, cell[CH_PHI + 1] * pi, cell[CH_PHI + 2] * pi];
    let (rz, ry, rx) = (
        rot_z(angles[0]),
        rot_y(angles[1]),
        rot_x(angles[2]),
    );
    let r_pred = rz * ry * rx;
    let dr = [
        rot_z_deriv(angles[0]) * ry * rx * pi,
        rz * rot_y_deriv(angles[1]) * rx * pi,
        rz * ry * rot_x_deriv(angles[2]) * pi,
    ];
    let mut d_angles = [0.0; 3];
    let mut branch = 0usize;
    match &geom.symmetry {
        SymmetryClass::Spherical => {}
        SymmetryClass::Revolution | SymmetryClass::RevolutionRotoreflection => {
            let lam = revolution_lambda(&geom.lambda);
            let a_pred = r_pred * Vec3::z();
            let a_gt = gt_pose.rotation * Vec3::z();
            let branches: &[Vec3] = if matches!(geom.symmetry, SymmetryClass::Revolution) {
                &[a_gt]
            } else {
                &[a_gt, -a_gt]
            };
            let mut best = f64::INFINITY;
            let mut best_diff = Vec3::zeros();
            for (bi, u) in branches.iter().enumerate() {
                let diff = a_pred - u;
                let v = lam * lam * diff.norm_squared();
                if v < best {
                    best = v;
                    best_diff = diff;
                    branch = bi;
                }
            }
            value += best;
            // d/dR of lam^2 |R e_z - u|^2 contracts with the third column
            // of each derivative matrix.
            for k in 0..3 {
                let col = dr[k] * Vec3::z();
                d_angles[k] = 2.0 * lam * lam * best_diff.dot(&col);
            }
        }
        _ => {
            let elements = geom.symmetry.elements().expect("finite symmetry");
            let a_pred = r_pred * geom.lambda;
            let mut best = f64::INFINITY;
            let mut best_diff = Mat3::zeros();
            for (bi, h) in elements.iter().enumerate() {
                let m = gt_pose.rotation.matrix() * h.matrix() * geom.lambda;
                let diff = a_pred - m;
                let v = diff.norm_squared();
                if v < best {
                    best = v;
                    best_diff = diff;
                    branch = bi;
                }
            }
            value += best;
            // d/dR |R L - M|^2 = 2 (R L - M) L^T; contract with dR/d angle.
            let d_r = 2.0 * best_diff * geom.lambda.transpose();
            for k in 0..3 {
                d_angles[k] = d_r.component_mul(&dr[k]).sum();
            }
        }
    }
    PoseTerm {
        value,
        d_position,
        d_angles,
        branch,
    }
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_z_deriv(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn rot_y_deriv(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn rot_x_deriv(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}
