//! Dice-entropy training loss.
//!
//! The objective is a weighted sum of a per-sample dice complement and
//! multi-category cross entropy over predicted probabilities. Batches are
//! flat row-major `[rows x classes]` slices; rows are pixels for the
//! segmentation head and scans for the classification head. Targets are
//! one-hot, predictions are distributions (softmax output). A small epsilon
//! guards the logarithm and the dice denominator.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Weight on the dice term.
    pub alpha1: f64,
    /// Weight on the cross-entropy term.
    pub alpha2: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha1: 1.0,
            alpha2: 1.0,
            epsilon: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if self.alpha1 + self.alpha2 <= 0.0 {
            return Err(Error::invalid("at least one loss weight must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("loss epsilon must be positive"));
        }
        Ok(())
    }
}

fn check_batch(targets: &[f64], probs: &[f64], classes: usize) -> Result<usize> {
    if classes == 0 {
        return Err(Error::invalid("batch needs at least one class"));
    }
    if targets.len() != probs.len() {
        return Err(Error::shape(format!(
            "target length {} does not match probability length {}",
            targets.len(),
            probs.len()
        )));
    }
    if !targets.len().is_multiple_of(classes) || targets.is_empty() {
        return Err(Error::shape(format!(
            "batch length {} is not a positive multiple of {classes} classes",
            targets.len()
        )));
    }
    Ok(targets.len() / classes)
}

/// Mean dice complement over rows:
/// `(1/N) sum_i (1 - 2 <t_i, p_i> / (|t_i|^2 + |p_i|^2 + eps))`.
pub fn dice_loss(targets: &[f64], probs: &[f64], classes: usize, epsilon: f64) -> Result<f64> {
    let rows = check_batch(targets, probs, classes)?;
    let mut total = 0.0;
    for i in 0..rows {
        let t = &targets[i * classes..(i + 1) * classes];
        let p = &probs[i * classes..(i + 1) * classes];
        let mut tp = 0.0;
        let mut tt = 0.0;
        let mut pp = 0.0;
        for (&tv, &pv) in t.iter().zip(p) {
            tp += tv * pv;
            tt += tv * tv;
            pp += pv * pv;
        }
        total += 1.0 - 2.0 * tp / (tt + pp + epsilon);
    }
    Ok(total / rows as f64)
}

/// Mean multi-category cross entropy: `-(1/N) sum_ij t_ij ln(p_ij + eps)`.
pub fn cross_entropy_loss(
    targets: &[f64],
    probs: &[f64],
    classes: usize,
    epsilon: f64,
) -> Result<f64> {
    let rows = check_batch(targets, probs, classes)?;
    let mut total = 0.0;
    for (&t, &p) in targets.iter().zip(probs) {
        if t != 0.0 {
            total -= t * (p + epsilon).ln();
        }
    }
    Ok(total / rows as f64)
}

/// Weighted dice-entropy loss.
pub fn dice_entropy_loss(
    targets: &[f64],
    probs: &[f64],
    classes: usize,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let d = dice_loss(targets, probs, classes, cfg.epsilon)?;
    let e = cross_entropy_loss(targets, probs, classes, cfg.epsilon)?;
    Ok(cfg.alpha1 * d + cfg.alpha2 * e)
}

/// Analytic gradient of [`dice_entropy_loss`] with respect to the predicted
/// probabilities, same layout as `probs`.
pub fn dice_entropy_grad(
    targets: &[f64],
    probs: &[f64],
    classes: usize,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let rows = check_batch(targets, probs, classes)?;
    let inv_n = 1.0 / rows as f64;
    let mut grad = vec![0.0; probs.len()];
    for i in 0..rows {
        let t = &targets[i * classes..(i + 1) * classes];
        let p = &probs[i * classes..(i + 1) * classes];
        let g = &mut grad[i * classes..(i + 1) * classes];
        let mut tp = 0.0;
        let mut tt = 0.0;
        let mut pp = 0.0;
        for (&tv, &pv) in t.iter().zip(p) {
            tp += tv * pv;
            tt += tv * tv;
            pp += pv * pv;
        }
        let denom = tt + pp + cfg.epsilon;
        for j in 0..classes {
            // d/dp_j of (1 - 2 tp / denom): quotient rule; denom depends on
            // p_j through |p|^2.
            let dice_term = -2.0 * (t[j] * denom - tp * 2.0 * p[j]) / (denom * denom);
            let ce_term = -t[j] / (p[j] + cfg.epsilon);
            g[j] = inv_n * (cfg.alpha1 * dice_term + cfg.alpha2 * ce_term);
        }
    }
    Ok(grad)
}
