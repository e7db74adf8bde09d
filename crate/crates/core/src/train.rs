//! Joint training of the hybrid network.
//!
//! Optimizes the dice-entropy loss over both heads: per-pixel segmentation
//! targets from the label masks, per-scan screening targets (healthy vs
//! glaucomatous) from the grade labels. Gradients flow through ADADELTA.
//! All randomness (split, shuffling, augmentation, initialization) derives
//! from one seed; two runs with the same seed and data produce bit-identical
//! weight trajectories.

use std::path::Path;

use crate::augment::{augment, AugmentConfig};
use crate::error::{Error, Result};
use crate::loss::{cross_entropy_loss, dice_entropy_grad, dice_loss, LossConfig};
use crate::nn::{Network, NetworkSpec, Phase};
use crate::optim::Adadelta;
use crate::rng::Rng;
use crate::scan::{GradeLabel, LayerMask, Scan};
use crate::tensor::Tensor4;

pub const SEG_CLASSES: usize = 3;
pub const CLS_CLASSES: usize = 2;

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub scan: Scan,
    pub mask: LayerMask,
    pub grade: GradeLabel,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Relative weight of the segmentation head in the joint objective.
    pub seg_weight: f64,
    /// Relative weight of the classification head.
    pub cls_weight: f64,
    pub augment: Option<AugmentConfig>,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub adadelta_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            iters_per_epoch: 512,
            batch_size: 4,
            seed: 0,
            loss: LossConfig::default(),
            seg_weight: 1.0,
            cls_weight: 1.0,
            augment: None,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            adadelta_lr: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub seg_loss: f64,
    pub cls_loss: f64,
    pub total: f64,
}

pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochStats>,
}

// ---------------------------------------------------------------------------
// Dataset splitting
// ---------------------------------------------------------------------------

/// Deterministic train/test partition: a seeded shuffle of the manifest
/// order, optionally stratified by grade. The partition depends only on
/// (record order, seed).
pub fn split_indices(
    n: usize,
    train_fraction: f64,
    seed: u64,
    stratify: Option<&[GradeLabel]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    match stratify {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let cut = ((n as f64) * train_fraction).round() as usize;
            let cut = cut.clamp(1, n - 1);
            train.extend_from_slice(&order[..cut]);
            test.extend_from_slice(&order[cut..]);
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::shape("stratification labels length mismatch"));
            }
            for grade in [
                GradeLabel::Healthy,
                GradeLabel::EarlyGlaucoma,
                GradeLabel::AdvancedGlaucoma,
            ] {
                let mut group: Vec<usize> = (0..n).filter(|&i| labels[i] == grade).collect();
                if group.is_empty() {
                    continue;
                }
                rng.shuffle(&mut group);
                // Singleton classes go to the training side; larger groups
                // keep at least one sample on each side.
                let cut = if group.len() == 1 {
                    1
                } else {
                    (((group.len() as f64) * train_fraction).round() as usize)
                        .clamp(1, group.len() - 1)
                };
                train.extend_from_slice(&group[..cut]);
                test.extend_from_slice(&group[cut..]);
            }
            train.sort_unstable();
            test.sort_unstable();
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("split produced an empty partition"));
    }
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Tensor plumbing
// ---------------------------------------------------------------------------

pub fn scan_to_tensor(scan: &Scan) -> Tensor4 {
    Tensor4::from_vec(1, 1, scan.height(), scan.width(), scan.pixels().to_vec())
        .expect("scan pixels are finite and sized")
}

fn batch_tensor(scans: &[&Scan]) -> Tensor4 {
    let parts: Vec<Tensor4> = scans.iter().map(|s| scan_to_tensor(s)).collect();
    Tensor4::concat_batch(&parts).expect("uniform scan dimensions")
}

/// Channel-major probabilities to pixel-major rows `[n*h*w x c]`.
fn probs_to_rows(t: &Tensor4) -> Vec<f64> {
    let (n, c, h, w) = t.shape();
    let mut rows = vec![0.0; n * c * h * w];
    for b in 0..n {
        for ch in 0..c {
            let plane = t.plane(b, ch);
            for (pos, &v) in plane.iter().enumerate() {
                rows[(b * h * w + pos) * c + ch] = v;
            }
        }
    }
    rows
}

/// Pixel-major row gradients back to the channel-major tensor layout.
fn rows_to_tensor(rows: &[f64], n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
    let mut t = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let plane = t.plane_mut(b, ch);
            for (pos, v) in plane.iter_mut().enumerate() {
                *v = rows[(b * h * w + pos) * c + ch];
            }
        }
    }
    t
}

fn mask_onehot_rows(masks: &[&LayerMask]) -> Vec<f64> {
    let h = masks[0].height();
    let w = masks[0].width();
    let mut rows = vec![0.0; masks.len() * h * w * SEG_CLASSES];
    for (b, mask) in masks.iter().enumerate() {
        for (pos, &label) in mask.labels().iter().enumerate() {
            rows[(b * h * w + pos) * SEG_CLASSES + label as usize] = 1.0;
        }
    }
    rows
}

fn grade_onehot_rows(grades: &[GradeLabel]) -> Vec<f64> {
    let mut rows = vec![0.0; grades.len() * CLS_CLASSES];
    for (b, g) in grades.iter().enumerate() {
        let idx = if g.is_glaucomatous() { 1 } else { 0 };
        rows[b * CLS_CLASSES + idx] = 1.0;
    }
    rows
}

// ---------------------------------------------------------------------------
// Inference helpers
// ---------------------------------------------------------------------------

/// Argmax segmentation of a single scan.
pub fn predict_mask(net: &mut Network, scan: &Scan) -> Result<LayerMask> {
    let x = scan_to_tensor(scan);
    let pass = net.forward(&x, Phase::Eval)?;
    let (seg, _) = net.heads(&pass);
    let (_, c, h, w) = seg.shape();
    debug_assert_eq!(c, SEG_CLASSES);
    let mut labels = vec![0u8; h * w];
    for pos in 0..h * w {
        let mut best = 0u8;
        let mut best_v = f64::NEG_INFINITY;
        for ch in 0..c {
            let v = seg.plane(0, ch)[pos];
            if v > best_v {
                best_v = v;
                best = ch as u8;
            }
        }
        labels[pos] = best;
    }
    Ok(LayerMask::from_labels_unchecked(labels, h, w))
}

/// Glaucoma probability of a single scan from the classification head.
pub fn predict_screening(net: &mut Network, scan: &Scan) -> Result<f64> {
    let x = scan_to_tensor(scan);
    let pass = net.forward(&x, Phase::Eval)?;
    let (_, cls) = net.heads(&pass);
    Ok(cls.at(0, 1, 0, 0))
}

/// Joint losses of the network on a fixed batch (evaluation mode).
pub fn evaluate_losses(
    net: &mut Network,
    samples: &[&TrainSample],
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let scans: Vec<&Scan> = samples.iter().map(|s| &s.scan).collect();
    let masks: Vec<&LayerMask> = samples.iter().map(|s| &s.mask).collect();
    let grades: Vec<GradeLabel> = samples.iter().map(|s| s.grade).collect();
    let x = batch_tensor(&scans);
    let pass = net.forward(&x, Phase::Eval)?;
    let (seg, cls) = net.heads(&pass);
    let seg_rows = probs_to_rows(seg);
    let seg_targets = mask_onehot_rows(&masks);
    let seg_loss = cfg.loss.alpha1
        * dice_loss(&seg_targets, &seg_rows, SEG_CLASSES, cfg.loss.epsilon)?
        + cfg.loss.alpha2
            * cross_entropy_loss(&seg_targets, &seg_rows, SEG_CLASSES, cfg.loss.epsilon)?;
    let cls_rows = probs_to_rows(cls);
    let cls_targets = grade_onehot_rows(&grades);
    let cls_loss = cfg.loss.alpha1
        * dice_loss(&cls_targets, &cls_rows, CLS_CLASSES, cfg.loss.epsilon)?
        + cfg.loss.alpha2
            * cross_entropy_loss(&cls_targets, &cls_rows, CLS_CLASSES, cfg.loss.epsilon)?;
    Ok((seg_loss, cls_loss))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

pub fn train(
    spec: NetworkSpec,
    samples: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.loss.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let (in_c, in_h, in_w) = spec.input_shape;
    if in_c != 1 {
        return Err(Error::invalid("training expects a single-channel input"));
    }
    for s in samples {
        if s.scan.height() != in_h || s.scan.width() != in_w {
            return Err(Error::shape(format!(
                "scan {} is {}x{}, network expects {in_h}x{in_w}",
                s.scan.id,
                s.scan.height(),
                s.scan.width()
            )));
        }
        if s.mask.height() != in_h || s.mask.width() != in_w {
            return Err(Error::shape(format!(
                "mask for {} has wrong dimensions",
                s.scan.id
            )));
        }
    }

    // Materialize the training pool: originals plus augmented copies.
    let mut pool: Vec<TrainSample> = samples.to_vec();
    if let Some(aug) = &cfg.augment {
        for (i, s) in samples.iter().enumerate() {
            let per_sample = AugmentConfig {
                seed: aug.seed ^ (i as u64).wrapping_mul(0x9e37_79b9),
                ..*aug
            };
            for (scan, mask) in augment(&s.scan, &s.mask, &per_sample)? {
                pool.push(TrainSample {
                    scan,
                    mask,
                    grade: s.grade,
                });
            }
        }
    }

    let mut net = Network::init(spec, cfg.seed)?;
    let mut opt = Adadelta::new(cfg.adadelta_rho, cfg.adadelta_eps, cfg.adadelta_lr)?;
    let mut rng = Rng::seed_from_u64(cfg.seed ^ 0x5eed_cafe);

    let mut order: Vec<usize> = (0..pool.len()).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut seg_sum = 0.0;
        let mut cls_sum = 0.0;
        for _ in 0..cfg.iters_per_epoch {
            // Next batch from the shuffled cycle.
            let mut batch: Vec<&TrainSample> = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                if cursor == order.len() {
                    rng.shuffle(&mut order);
                    cursor = 0;
                }
                batch.push(&pool[order[cursor]]);
                cursor += 1;
            }
            let scans: Vec<&Scan> = batch.iter().map(|s| &s.scan).collect();
            let masks: Vec<&LayerMask> = batch.iter().map(|s| &s.mask).collect();
            let grades: Vec<GradeLabel> = batch.iter().map(|s| s.grade).collect();

            let x = batch_tensor(&scans);
            let pass = net.forward(&x, Phase::Train)?;
            let (seg, cls) = net.heads(&pass);
            let (n, _, h, w) = seg.shape();

            let seg_rows = probs_to_rows(seg);
            let seg_targets = mask_onehot_rows(&masks);
            let seg_loss = cfg.loss.alpha1
                * dice_loss(&seg_targets, &seg_rows, SEG_CLASSES, cfg.loss.epsilon)?
                + cfg.loss.alpha2
                    * cross_entropy_loss(&seg_targets, &seg_rows, SEG_CLASSES, cfg.loss.epsilon)?;
            let mut seg_grad_rows =
                dice_entropy_grad(&seg_targets, &seg_rows, SEG_CLASSES, &cfg.loss)?;
            for g in seg_grad_rows.iter_mut() {
                *g *= cfg.seg_weight;
            }
            let grad_seg = rows_to_tensor(&seg_grad_rows, n, SEG_CLASSES, h, w);

            let cls_rows = probs_to_rows(cls);
            let cls_targets = grade_onehot_rows(&grades);
            let cls_loss = cfg.loss.alpha1
                * dice_loss(&cls_targets, &cls_rows, CLS_CLASSES, cfg.loss.epsilon)?
                + cfg.loss.alpha2
                    * cross_entropy_loss(&cls_targets, &cls_rows, CLS_CLASSES, cfg.loss.epsilon)?;
            let mut cls_grad_rows =
                dice_entropy_grad(&cls_targets, &cls_rows, CLS_CLASSES, &cfg.loss)?;
            for g in cls_grad_rows.iter_mut() {
                *g *= cfg.cls_weight;
            }
            let grad_cls = rows_to_tensor(&cls_grad_rows, n, CLS_CLASSES, 1, 1);

            let grads = net.backward(&pass, Some(&grad_seg), Some(&grad_cls))?;
            {
                let grad_slices = grads.learnable();
                let mut param_slices = net.weights.learnable_mut();
                opt.step(&mut param_slices, &grad_slices)?;
            }

            seg_sum += seg_loss;
            cls_sum += cls_loss;
        }
        let denom = cfg.iters_per_epoch.max(1) as f64;
        history.push(EpochStats {
            epoch: epoch + 1,
            seg_loss: seg_sum / denom,
            cls_loss: cls_sum / denom,
            total: (seg_sum + cls_sum) / denom,
        });
    }

    Ok(TrainOutcome {
        network: net,
        history,
    })
}

/// History CSV with header `epoch,seg_loss,cls_loss,total`.
pub fn write_history_csv(history: &[EpochStats], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,seg_loss,cls_loss,total\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.seg_loss, h.cls_loss, h.total
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
