//! Deterministic training: batch gradients, optimizers, the training loop,
//! and a finite-difference gradient checker.
//!
//! Per-sample gradients are computed in parallel but reduced in sample
//! order, so thread count never changes the result. The dynamic `L_do`
//! targets are recomputed from the current prediction at every step and
//! treated as constants during differentiation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig, BackgroundStore};
use crate::codec::{GtSample, CH_CLASS};
use crate::loss::{compute_do_targets, loss, loss_with_grad, DoTargets, LossBreakdown, LossWeights};
use crate::net::MiniFcn;
use crate::object::ClassGeometry;
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Apply the augmentation stack to training images.
    pub augment: bool,
    /// Optional hard cap on optimization steps.
    pub max_steps: Option<usize>,
    /// Train the placement head on thresholded `{0, 1}` labels instead of
    /// the regression labels (the classifier-style baseline).
    pub binary_labels: bool,
    pub momentum_beta: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            augment: false,
            max_steps: None,
            binary_labels: false,
            momentum_beta: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be non-negative"));
        }
        Ok(())
    }
}

/// One training example: a normalized depth raster and its ground truth.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Vec<f64>,
    pub gt: GtSample,
}

/// Rewrites the placement block to `{0, 1}`: distances below `d_max`
/// count as success (0), everything else as failure (1). This reproduces
/// the classifier-style labeling regime for the baseline policy.
pub fn binarize_with_codec(gt: &mut GtSample, cfg: &crate::codec::CodecConfig) {
    for i in 0..gt.tensor.cells() {
        if !gt.placement_mask.get(i) {
            continue;
        }
        let cell = gt.tensor.cell_mut(i);
        for v in &mut cell[CH_CLASS + cfg.c..] {
            *v = if *v < cfg.d_max { 0.0 } else { 1.0 };
        }
    }
}

/// Loss and parameter gradient for a single sample. The dynamic targets
/// are assembled from the current forward pass and then frozen, which is
/// exactly the stop-gradient semantics of the loss.
pub fn sample_gradient(
    net: &MiniFcn,
    sample: &TrainSample,
    weights: &LossWeights,
    classes: &[ClassGeometry],
) -> Result<(LossBreakdown, Vec<f64>)> {
    let cache = net.forward_cached(&sample.image);
    let targets = compute_do_targets(&cache.output, &sample.gt, classes, &net.codec)?;
    let (bd, grad_out) = loss_with_grad(
        &cache.output,
        &sample.gt,
        weights,
        classes,
        &net.codec,
        DoTargets::Frozen(&targets),
    )?;
    let mut grad = vec![0.0; net.params.len()];
    net.backward(&cache, &grad_out, &mut grad);
    Ok((bd, grad))
}

/// Mean loss and mean gradient over a batch. Parallel per sample with a
/// fixed-order reduction.
pub fn batch_gradient(
    net: &MiniFcn,
    batch: &[&TrainSample],
    weights: &LossWeights,
    classes: &[ClassGeometry],
) -> Result<(LossBreakdown, Vec<f64>)> {
    let per_sample: Vec<Result<(LossBreakdown, Vec<f64>)>> = batch
        .par_iter()
        .map(|s| sample_gradient(net, s, weights, classes))
        .collect();
    let mut total = LossBreakdown::default();
    let mut grad = vec![0.0; net.params.len()];
    for r in per_sample {
        let (bd, g) = r?;
        total.accumulate(&bd);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    for g in &mut grad {
        *g *= inv;
    }
    Ok((total, grad))
}

struct OptimizerState {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        let needs_v = matches!(kind, OptimizerKind::Adam);
        OptimizerState {
            kind,
            m: if matches!(kind, OptimizerKind::Sgd) {
                Vec::new()
            } else {
                vec![0.0; n]
            },
            v: if needs_v { vec![0.0; n] } else { Vec::new() },
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        let lr = cfg.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Momentum => {
                for ((p, g), m) in params.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = cfg.momentum_beta * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let b1 = cfg.adam_beta1;
                let b2 = cfg.adam_beta2;
                let bc1 = 1.0 - b1.powi(self.t as i32);
                let bc2 = 1.0 - b2.powi(self.t as i32);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
        }
    }
}

/// Runs the training loop, returning the per-step mean loss history.
/// Divergence (non-finite loss) aborts with a numeric error.
pub fn train(
    net: &mut MiniFcn,
    samples: &[TrainSample],
    cfg: &TrainConfig,
    weights: &LossWeights,
    classes: &[ClassGeometry],
    backgrounds: &BackgroundStore,
    augment_cfg: &AugmentConfig,
) -> Result<Vec<LossBreakdown>> {
    cfg.validate()?;
    weights.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let n = samples.len();
    let input_size = net.arch.input_size as u32;
    let mut history = Vec::new();
    let mut opt = OptimizerState::new(cfg.optimizer, net.params.len());
    let mut step = 0usize;
    'outer: for epoch in 0..cfg.epochs {
        // Seeded shuffle per epoch.
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle", epoch as u64));
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            if let Some(max) = cfg.max_steps {
                if step >= max {
                    break 'outer;
                }
            }
            // Assemble the batch, augmenting copies when enabled.
            let augmented: Vec<TrainSample>;
            let batch: Vec<&TrainSample> = if cfg.augment {
                augmented = chunk
                    .iter()
                    .enumerate()
                    .map(|(slot, &idx)| {
                        let s = &samples[idx];
                        let aseed = derive_seed(
                            cfg.seed,
                            "augment",
                            (step as u64) << 20 | slot as u64,
                        );
                        TrainSample {
                            image: augment(
                                &s.image,
                                input_size,
                                input_size,
                                backgrounds,
                                augment_cfg,
                                aseed,
                            ),
                            gt: s.gt.clone(),
                        }
                    })
                    .collect();
                augmented.iter().collect()
            } else {
                chunk.iter().map(|&idx| &samples[idx]).collect()
            };
            let (bd, grad) = batch_gradient(net, &batch, weights, classes)?;
            if !bd.total.is_finite() {
                return Err(Error::numeric(format!(
                    "loss diverged at step {step} (total = {})",
                    bd.total
                )));
            }
            opt.step(&mut net.params, &grad, cfg);
            history.push(bd);
            step += 1;
        }
    }
    Ok(history)
}

/// Report of a finite-difference gradient audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// The worst parameter's finite-difference and analytic values.
    pub worst_pair: (f64, f64),
}

/// Compares the reverse-mode batch gradient against central finite
/// differences on randomly chosen parameters.
///
/// The dynamic `L_do` targets are frozen at the evaluation point (they are
/// constants of the loss). Parameters whose stencil crosses a ReLU or
/// branch boundary are skipped: central differences do not estimate a
/// derivative across a kink. The relative error uses a floor tied to the
/// gradient scale so near-zero gradients compare against numerical noise
/// fairly.
pub fn gradient_check(
    net: &MiniFcn,
    samples: &[&TrainSample],
    weights: &LossWeights,
    classes: &[ClassGeometry],
    n_params: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    // Analytic gradient and frozen targets at the evaluation point.
    let mut frozen: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    let mut grad = vec![0.0; net.params.len()];
    let mut _loss0 = 0.0;
    for s in samples {
        let cache = net.forward_cached(&s.image);
        let targets = compute_do_targets(&cache.output, &s.gt, classes, &net.codec)?;
        let (bd, grad_out) = loss_with_grad(
            &cache.output,
            &s.gt,
            weights,
            classes,
            &net.codec,
            DoTargets::Frozen(&targets),
        )?;
        net.backward(&cache, &grad_out, &mut grad);
        _loss0 += bd.total;
        frozen.push(targets);
    }
    let inv = 1.0 / samples.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    let grad_scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let floor = (1e-6 * grad_scale).max(1e-7);

    let eval = |params: &[f64]| -> Result<(f64, u64)> {
        let mut probe = net.clone();
        probe.params = params.to_vec();
        let mut total = 0.0;
        let mut sig: u64 = 0xcbf2_9ce4_8422_2325;
        for (s, targets) in samples.iter().zip(&frozen) {
            let cache = probe.forward_cached(&s.image);
            let bd = loss(
                &cache.output,
                &s.gt,
                weights,
                classes,
                &probe.codec,
                DoTargets::Frozen(targets),
            )?;
            total += bd.total;
            // Net-level ReLU signs plus loss-level branch/clamp choices:
            // both must agree across the stencil for the difference
            // quotient to estimate a derivative.
            sig = sig
                .rotate_left(17)
                .wrapping_add(cache.activation_signature(&probe.arch, &probe.codec));
            sig = sig.rotate_left(17).wrapping_add(crate::loss::kink_signature(
                &cache.output,
                &s.gt,
                classes,
                &probe.codec,
            ));
        }
        Ok((total * inv, sig))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst_pair: (0.0, 0.0),
    };
    while report.checked < n_params {
        let pi = rng.random_range(0..net.params.len());
        let mut plus = net.params.clone();
        plus[pi] += eps;
        let mut minus = net.params.clone();
        minus[pi] -= eps;
        let (fp, sig_p) = eval(&plus)?;
        let (fm, sig_m) = eval(&minus)?;
        if sig_p != sig_m {
            report.skipped_kinks += 1;
            continue;
        }
        let fd = (fp - fm) / (2.0 * eps);
        let rel = (fd - grad[pi]).abs() / fd.abs().max(grad[pi].abs()).max(floor);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_pair = (fd, grad[pi]);
        }
        report.checked += 1;
    }
    Ok(report)
}
