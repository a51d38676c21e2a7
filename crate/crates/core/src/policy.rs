//! Grasp-selection policy over decoded tensors.
//!
//! Distance estimates become scores (`s_o = exp(-0.5 * d_o)`, bounded
//! `s_p = 1 - d_p / d_max`) and the policy picks the cell/grasp pair
//! maximizing `p * s_o * s_p` (the baseline variant drops `s_o`). Ties go
//! to the lexicographically smallest `(cell, grasp)` pair.

use serde::{Deserialize, Serialize};

use crate::codec::{decode, CodecConfig, OutputTensor};
use crate::geom::Pose;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    /// `p * s_o * s_p`.
    Full,
    /// `p * s_p`, the classifier-style ranking without the pose-distance
    /// score.
    NoOpeScore,
}

/// Minimum presence for a cell to be considered at all.
pub const DEFAULT_PRESENCE_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub cell: usize,
    /// Global grasp index within the predicted class (gripper blocks in
    /// registry order).
    pub grasp_index: usize,
    pub gripper_id: String,
    /// Index within that gripper's block.
    pub local_index: usize,
    pub score: f64,
    pub presence: f64,
    pub class_id: u32,
    pub pose: Pose,
    pub d_o: f64,
    pub d_p: f64,
}

/// Distance-to-score transforms. Rejects negative distances and placement
/// distances beyond `d_max`.
pub fn scores(d_o_hat: f64, d_p_hat: f64, d_max: f64) -> Result<(f64, f64)> {
    if d_o_hat < 0.0 || !d_o_hat.is_finite() {
        return Err(Error::invalid(format!(
            "pose distance estimate must be non-negative, got {d_o_hat}"
        )));
    }
    if d_p_hat < 0.0 || d_p_hat > d_max {
        return Err(Error::invalid(format!(
            "placement distance estimate must lie in [0, {d_max}], got {d_p_hat}"
        )));
    }
    Ok(((-0.5 * d_o_hat).exp(), 1.0 - d_p_hat / d_max))
}

/// Argmax of the policy over all candidate cells and grasp indices.
/// Returns `None` when no cell reaches the presence floor.
pub fn select(
    tensor: &OutputTensor,
    cfg: &CodecConfig,
    variant: PolicyVariant,
    presence_floor: f64,
) -> Result<Option<Selection>> {
    let mut candidates = decode(tensor, cfg, presence_floor);
    // Scan in cell order so exact ties resolve to the smallest (cell, k).
    candidates.sort_by_key(|c| c.cell);
    let mut best: Option<Selection> = None;
    for cand in &candidates {
        let class = &cfg.classes[cand.class_id as usize];
        for (k, &d_p) in cand.d_p.iter().enumerate() {
            let (s_o, s_p) = scores(cand.d_o, d_p, cfg.d_max)?;
            let score = match variant {
                PolicyVariant::Full => cand.presence * s_o * s_p,
                PolicyVariant::NoOpeScore => cand.presence * s_p,
            };
            if best.as_ref().is_none_or(|b| score > b.score) {
                let (gripper_id, local_index) = class
                    .resolve(k)
                    .map(|(g, l)| (g.to_string(), l))
                    .unwrap_or_default();
                best = Some(Selection {
                    cell: cand.cell,
                    grasp_index: k,
                    gripper_id,
                    local_index,
                    score,
                    presence: cand.presence,
                    class_id: cand.class_id,
                    pose: cand.pose,
                    d_o: cand.d_o,
                    d_p,
                });
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ClassCodec, VolumeBounds, CH_CLASS, CH_DO, CH_P};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> CodecConfig {
        CodecConfig::new(
            4,
            VolumeBounds {
                x: (-0.25, 0.25),
                y: (-0.25, 0.25),
                z: (0.4, 1.2),
            },
            vec![
                ClassCodec {
                    class_id: 0,
                    blocks: vec![("cup".into(), 2), ("pj".into(), 1)],
                },
                ClassCodec {
                    class_id: 1,
                    blocks: vec![("cup".into(), 4)],
                },
            ],
            1.0,
        )
    }

    #[test]
    fn score_transforms_match_analytic_values() {
        let (s_o, s_p) = scores(0.0, 0.0, 1.0).unwrap();
        assert_eq!((s_o, s_p), (1.0, 1.0));
        let (s_o, _) = scores(1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(s_o, (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s_o, 0.60653, epsilon = 1e-5);
        let (_, s_p) = scores(0.0, 1.0, 1.0).unwrap();
        assert_eq!(s_p, 0.0);
        assert!(scores(-0.1, 0.0, 1.0).is_err());
        assert!(scores(0.0, -0.1, 1.0).is_err());
        assert!(scores(0.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn single_candidate_is_selected() {
        let cfg = cfg();
        let mut t = OutputTensor::zeros(&cfg);
        {
            let c = t.cell_mut(5);
            c[CH_P] = 0.9;
            c[CH_CLASS] = 1.0;
            c[CH_DO] = 0.2;
            // First grasp clearly best.
            let dp = &mut c[CH_CLASS + cfg.c..];
            dp[0] = 0.1;
            dp[1] = 0.8;
            dp[2] = 0.9;
        }
        let sel = select(&t, &cfg, PolicyVariant::Full, 0.5).unwrap().unwrap();
        assert_eq!(sel.cell, 5);
        assert_eq!(sel.grasp_index, 0);
        assert_eq!(sel.gripper_id, "cup");
        assert_eq!(sel.local_index, 0);
        assert_eq!(sel.class_id, 0);
    }

    #[test]
    fn gripper_resolution_spans_blocks() {
        let cfg = cfg();
        let mut t = OutputTensor::zeros(&cfg);
        {
            let c = t.cell_mut(0);
            c[CH_P] = 0.8;
            c[CH_CLASS] = 1.0;
            let dp = &mut c[CH_CLASS + cfg.c..];
            dp[0] = 0.9;
            dp[1] = 0.9;
            dp[2] = 0.05; // third grasp = parallel jaw block
        }
        let sel = select(&t, &cfg, PolicyVariant::Full, 0.5).unwrap().unwrap();
        assert_eq!(sel.grasp_index, 2);
        assert_eq!(sel.gripper_id, "pj");
        assert_eq!(sel.local_index, 0);
    }

    #[test]
    fn matches_bruteforce_enumeration() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let mut t = OutputTensor::zeros(&cfg);
            for i in 0..cfg.cells() {
                let c = t.cell_mut(i);
                c[CH_P] = rng.random_range(0.0..1.0);
                c[CH_DO] = rng.random_range(0.0..2.0);
                let a: f64 = rng.random_range(0.1..1.0);
                c[CH_CLASS] = a;
                c[CH_CLASS + 1] = 1.0 - a;
                for v in &mut c[CH_CLASS + cfg.c..] {
                    *v = rng.random_range(0.0..1.0);
                }
            }
            for variant in [PolicyVariant::Full, PolicyVariant::NoOpeScore] {
                let got = select(&t, &cfg, variant, 0.5).unwrap();
                // Brute force over every cell and grasp slot.
                let mut best: Option<(f64, usize, usize)> = None;
                for i in 0..cfg.cells() {
                    let c = t.cell(i);
                    if c[CH_P] < 0.5 {
                        continue;
                    }
                    let class = if c[CH_CLASS] >= c[CH_CLASS + 1] { 0 } else { 1 };
                    let k_j = cfg.classes[class].k_total();
                    for k in 0..k_j {
                        let d_p = c[CH_CLASS + cfg.c + k];
                        let s_o = (-0.5 * c[CH_DO]).exp();
                        let s_p = 1.0 - d_p;
                        let score = match variant {
                            PolicyVariant::Full => c[CH_P] * s_o * s_p,
                            PolicyVariant::NoOpeScore => c[CH_P] * s_p,
                        };
                        let better = match &best {
                            None => true,
                            Some((b, _, _)) => score > *b,
                        };
                        if better {
                            best = Some((score, i, k));
                        }
                    }
                }
                match (got, best) {
                    (None, None) => {}
                    (Some(sel), Some((score, cell, k))) => {
                        assert_eq!((sel.cell, sel.grasp_index), (cell, k));
                        assert_abs_diff_eq!(sel.score, score, epsilon = 1e-12);
                    }
                    (a, b) => panic!("mismatch {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn exact_ties_resolve_to_lowest_cell_and_grasp() {
        let cfg = cfg();
        let mut t = OutputTensor::zeros(&cfg);
        for &cell in &[7, 2] {
            let c = t.cell_mut(cell);
            c[CH_P] = 0.75;
            c[CH_CLASS] = 1.0;
            let dp = &mut c[CH_CLASS + cfg.c..];
            dp[0] = 0.25;
            dp[1] = 0.25;
            dp[2] = 0.9;
        }
        let sel = select(&t, &cfg, PolicyVariant::Full, 0.5).unwrap().unwrap();
        assert_eq!(sel.cell, 2);
        assert_eq!(sel.grasp_index, 0);
    }

    #[test]
    fn lower_placement_distance_never_ranks_worse() {
        let cfg = cfg();
        let mut t = OutputTensor::zeros(&cfg);
        {
            let c = t.cell_mut(0);
            c[CH_P] = 0.8;
            c[CH_CLASS] = 1.0;
            let dp = &mut c[CH_CLASS + cfg.c..];
            dp[0] = 0.4;
            dp[1] = 0.39;
            dp[2] = 0.41;
        }
        let sel = select(&t, &cfg, PolicyVariant::Full, 0.5).unwrap().unwrap();
        assert_eq!(sel.grasp_index, 1);
    }

    #[test]
    fn empty_tensor_yields_no_selection() {
        let cfg = cfg();
        let t = OutputTensor::zeros(&cfg);
        assert!(select(&t, &cfg, PolicyVariant::Full, 0.5).unwrap().is_none());
    }
}
