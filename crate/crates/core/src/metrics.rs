//! Evaluation machinery: confusion rates, ROC/AUC, dice, mask precision,
//! and Pearson correlation with significance.
//!
//! Rates with zero denominators are reported as undefined (`None` /
//! JSON `null`), never coerced to 0.

use crate::error::{Error, Result};
use crate::scan::{LayerMask, LABEL_GCIPL, LABEL_RNFL};
use crate::stats::student_t_two_tailed_p;

// ---------------------------------------------------------------------------
// Confusion matrix
// ---------------------------------------------------------------------------

/// Scan-wise confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn new(true_pos: u64, true_neg: u64, false_pos: u64, false_neg: u64) -> Self {
        ConfusionCounts {
            true_pos,
            true_neg,
            false_pos,
            false_neg,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.true_pos += 1,
            (false, false) => self.true_neg += 1,
            (true, false) => self.false_pos += 1,
            (false, true) => self.false_neg += 1,
        }
    }
}

/// Derived rates; `None` marks an undefined rate (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMetrics {
    #[serde(rename = "acc")]
    pub accuracy: Option<f64>,
    #[serde(rename = "tpr")]
    pub recall: Option<f64>,
    #[serde(rename = "tnr")]
    pub specificity: Option<f64>,
    #[serde(rename = "fpr")]
    pub false_pos_rate: Option<f64>,
    #[serde(rename = "ppv")]
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_metrics(c: &ConfusionCounts) -> ConfusionMetrics {
    let accuracy = ratio(c.true_pos + c.true_neg, c.total());
    let recall = ratio(c.true_pos, c.true_pos + c.false_neg);
    let specificity = ratio(c.true_neg, c.true_neg + c.false_pos);
    let false_pos_rate = ratio(c.false_pos, c.true_neg + c.false_pos);
    let precision = ratio(c.true_pos, c.true_pos + c.false_pos);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ConfusionMetrics {
        accuracy,
        recall,
        specificity,
        false_pos_rate,
        precision,
        f1,
    }
}

// ---------------------------------------------------------------------------
// Segmentation overlap scores
// ---------------------------------------------------------------------------

/// Region under evaluation; GCC is the union of the two stored labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskClass {
    Rnfl,
    GcIpl,
    Gcc,
}

impl MaskClass {
    pub const ALL: [MaskClass; 3] = [MaskClass::Rnfl, MaskClass::GcIpl, MaskClass::Gcc];

    #[inline]
    fn member(self, label: u8) -> bool {
        match self {
            MaskClass::Rnfl => label == LABEL_RNFL,
            MaskClass::GcIpl => label == LABEL_GCIPL,
            MaskClass::Gcc => label != 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskClass::Rnfl => "rnfl",
            MaskClass::GcIpl => "gcip",
            MaskClass::Gcc => "gcc",
        }
    }
}

/// An overlap score plus a flag marking the vacuous case (region absent in
/// both masks), which scores 1 but is excluded from dataset means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionScore {
    pub value: f64,
    pub vacuous: bool,
}

fn pixel_counts(pred: &LayerMask, gt: &LayerMask, class: MaskClass) -> Result<(u64, u64, u64)> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::shape(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, g) in pred.labels().iter().zip(gt.labels()) {
        match (class.member(*p), class.member(*g)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok((tp, fp, fn_))
}

/// Pixel-wise dice coefficient `2TP / (2TP + FP + FN)` for one region.
pub fn dice(pred: &LayerMask, gt: &LayerMask, class: MaskClass) -> Result<RegionScore> {
    let (tp, fp, fn_) = pixel_counts(pred, gt, class)?;
    if tp + fp + fn_ == 0 {
        return Ok(RegionScore {
            value: 1.0,
            vacuous: true,
        });
    }
    Ok(RegionScore {
        value: 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64),
        vacuous: false,
    })
}

/// Mask precision: pixel precision `TP / (TP + FP)` when the region's dice
/// reaches 0.5, otherwise the whole region counts as false positive and the
/// score is 0.
pub fn mask_precision(pred: &LayerMask, gt: &LayerMask, class: MaskClass) -> Result<RegionScore> {
    let (tp, fp, fn_) = pixel_counts(pred, gt, class)?;
    if tp + fp + fn_ == 0 {
        return Ok(RegionScore {
            value: 1.0,
            vacuous: true,
        });
    }
    let dice = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64);
    let value = if dice >= 0.5 {
        if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        }
    } else {
        0.0
    };
    Ok(RegionScore {
        value,
        vacuous: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassScore {
    pub dice: Option<f64>,
    pub mask_precision: Option<f64>,
}

/// Dataset-level segmentation score: scan-wise means per region, then the
/// mean across regions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SegmentationScore {
    pub per_class: std::collections::BTreeMap<String, ClassScore>,
    pub mean_dice: Option<f64>,
    pub mean_mask_precision: Option<f64>,
}

/// Score a set of (predicted, reference) mask pairs. Vacuous scans (region
/// absent from both masks) are excluded from that region's mean.
pub fn segmentation_score(pairs: &[(&LayerMask, &LayerMask)]) -> Result<SegmentationScore> {
    let mut per_class = std::collections::BTreeMap::new();
    let mut dice_means = Vec::new();
    let mut mp_means = Vec::new();
    for class in MaskClass::ALL {
        let mut dices = Vec::new();
        let mut precisions = Vec::new();
        for (pred, gt) in pairs {
            let d = dice(pred, gt, class)?;
            if !d.vacuous {
                dices.push(d.value);
            }
            let m = mask_precision(pred, gt, class)?;
            if !m.vacuous {
                precisions.push(m.value);
            }
        }
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let score = ClassScore {
            dice: mean(&dices),
            mask_precision: mean(&precisions),
        };
        if let Some(d) = score.dice {
            dice_means.push(d);
        }
        if let Some(m) = score.mask_precision {
            mp_means.push(m);
        }
        per_class.insert(class.as_str().to_string(), score);
    }
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    Ok(SegmentationScore {
        mean_dice: mean(&dice_means),
        mean_mask_precision: mean(&mp_means),
        per_class,
    })
}

// ---------------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve from per-sample scores (higher = more positive) and labels.
/// Sweeps every distinct score as a threshold, grouping ties; AUC by the
/// trapezoidal rule.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "ROC requires at least one positive and one negative sample",
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("ROC scores must be finite"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume the whole tie group before emitting a point.
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[0].tpr + pair[1].tpr) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

// ---------------------------------------------------------------------------
// Pearson correlation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub n: usize,
}

/// Product-moment correlation with a two-tailed p-value from the Student-t
/// distribution on n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::shape("pearson inputs differ in length"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("pearson requires at least 3 samples"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid(
            "pearson is undefined: an input has zero variance",
        ));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if 1.0 - r * r <= f64::EPSILON {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_tailed_p(t, df)?
    };
    Ok(CorrelationResult { r, p_value, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::LayerMask;

    fn mask_from(rows: &[&[u8]]) -> LayerMask {
        let h = rows.len();
        let w = rows[0].len();
        LayerMask::new(rows.concat(), h, w).unwrap()
    }

    #[test]
    fn confusion_fixture_reproduces_reference_rates() {
        let m = confusion_metrics(&ConfusionCounts::new(34, 22, 2, 1));
        assert!((m.accuracy.unwrap() - 0.9491).abs() < 1e-4);
        assert!((m.recall.unwrap() - 0.9714).abs() < 1e-4);
        assert!((m.specificity.unwrap() - 0.9166).abs() < 1e-4);
        assert!((m.false_pos_rate.unwrap() - 0.0834).abs() < 1e-4);
        assert!((m.precision.unwrap() - 0.9444).abs() < 1e-4);
        assert!((m.f1.unwrap() - 0.9577).abs() < 1e-4);
    }

    #[test]
    fn undefined_rates_are_none_not_zero() {
        let m = confusion_metrics(&ConfusionCounts::new(0, 10, 0, 0));
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.recall, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
    }

    #[test]
    fn grading_31_of_34_accuracy() {
        // 31 correct out of 34: counts arranged as a 2-class grading matrix.
        let m = confusion_metrics(&ConfusionCounts::new(15, 16, 2, 1));
        assert!((m.accuracy.unwrap() - 0.9117).abs() < 1e-4);
    }

    #[test]
    fn dice_perfect_disjoint_and_half() {
        let gt = mask_from(&[&[1, 1, 1, 1], &[0, 0, 0, 0]]);
        assert_eq!(dice(&gt, &gt, MaskClass::Rnfl).unwrap().value, 1.0);

        let disjoint = mask_from(&[&[0, 0, 0, 0], &[1, 1, 1, 1]]);
        assert_eq!(dice(&disjoint, &gt, MaskClass::Rnfl).unwrap().value, 0.0);

        // Prediction covers exactly half of the reference, no false positives.
        let half = mask_from(&[&[1, 1, 0, 0], &[0, 0, 0, 0]]);
        let d = dice(&half, &gt, MaskClass::Rnfl).unwrap().value;
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dice_is_symmetric_mask_precision_is_not() {
        let a = mask_from(&[&[1, 1, 1, 0]]);
        let b = mask_from(&[&[1, 1, 0, 0]]);
        let dab = dice(&a, &b, MaskClass::Rnfl).unwrap().value;
        let dba = dice(&b, &a, MaskClass::Rnfl).unwrap().value;
        assert_eq!(dab, dba);
        let pab = mask_precision(&a, &b, MaskClass::Rnfl).unwrap().value;
        let pba = mask_precision(&b, &a, MaskClass::Rnfl).unwrap().value;
        assert!((pab - 2.0 / 3.0).abs() < 1e-12);
        assert!((pba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mask_precision_zeroes_below_half_dice() {
        // tp=1, fp=2, fn=2 -> dice = 2/6 < 0.5 -> score 0.
        let gt = mask_from(&[&[1, 1, 1, 0, 0, 0]]);
        let pred = mask_from(&[&[1, 0, 0, 1, 1, 0]]);
        let d = dice(&pred, &gt, MaskClass::Rnfl).unwrap().value;
        assert!(d < 0.5);
        assert_eq!(
            mask_precision(&pred, &gt, MaskClass::Rnfl).unwrap().value,
            0.0
        );
    }

    #[test]
    fn mask_precision_counts_pixels_above_half_dice() {
        // tp=100, fp=25, fn=0 -> dice = 200/225 >= 0.5 -> precision 0.8.
        let mut gt_labels = vec![0u8; 250];
        let mut pred_labels = vec![0u8; 250];
        gt_labels[..100].fill(1);
        pred_labels[..100].fill(1);
        pred_labels[100..125].fill(1);
        let gt = LayerMask::new(gt_labels, 10, 25).unwrap();
        let pred = LayerMask::new(pred_labels, 10, 25).unwrap();
        let m = mask_precision(&pred, &gt, MaskClass::Rnfl).unwrap().value;
        assert!((m - 0.8).abs() < 1e-12);
    }

    #[test]
    fn vacuous_regions_score_one_but_are_flagged() {
        let empty = mask_from(&[&[0, 0], &[0, 0]]);
        let d = dice(&empty, &empty, MaskClass::GcIpl).unwrap();
        assert_eq!(d.value, 1.0);
        assert!(d.vacuous);
    }

    #[test]
    fn mean_dice_is_the_scanwise_mean() {
        let gt = mask_from(&[&[1, 1, 2, 2]]);
        let half = mask_from(&[&[1, 0, 2, 0]]);
        let pairs: Vec<(&LayerMask, &LayerMask)> = vec![(&gt, &gt), (&half, &gt)];
        let score = segmentation_score(&pairs).unwrap();
        // Hand-rolled: per-scan RNFL dice are 1 and 2/3.
        let expect_rnfl = (1.0 + 2.0 / 3.0) / 2.0;
        assert!((score.per_class["rnfl"].dice.unwrap() - expect_rnfl).abs() < 1e-12);
        let expect_mean = (score.per_class["rnfl"].dice.unwrap()
            + score.per_class["gcip"].dice.unwrap()
            + score.per_class["gcc"].dice.unwrap())
            / 3.0;
        assert!((score.mean_dice.unwrap() - expect_mean).abs() < 1e-12);
    }

    #[test]
    fn roc_trivial_cases() {
        let perfect = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(perfect.auc, 1.0);
        assert_eq!(
            perfect.points.first(),
            Some(&RocPoint { fpr: 0.0, tpr: 0.0 })
        );
        assert_eq!(
            perfect.points.last(),
            Some(&RocPoint { fpr: 1.0, tpr: 1.0 })
        );

        let chance = roc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]).unwrap();
        assert!((chance.auc - 0.5).abs() < 1e-15);
        assert_eq!(chance.points.len(), 2);
    }

    #[test]
    fn roc_rejects_single_class() {
        assert!(roc(&[0.1, 0.2], &[true, true]).is_err());
    }

    /// Pair-counting AUC estimator: P(score+ > score-) + 0.5 P(tie).
    fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn roc_auc_matches_pair_counting() {
        let mut rng = crate::rng::Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = 3 + rng.index(200);
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                // Quantize scores so ties actually occur.
                scores.push((rng.uniform() * 10.0).round() / 10.0);
                labels.push(rng.bool());
            }
            if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
                continue;
            }
            let curve = roc(&scores, &labels).unwrap();
            let expect = auc_by_pairs(&scores, &labels);
            assert!((curve.auc - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn pearson_trivial_and_fixture() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ident = pearson(&x, &x).unwrap();
        assert!((ident.r - 1.0).abs() < 1e-12);
        assert!(ident.p_value < 1e-12);

        let anti = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((anti.r + 1.0).abs() < 1e-12);

        // Permuted ranks with known correlation 0.8.
        let y = [2.0, 1.0, 3.0, 5.0, 4.0];
        let res = pearson(&x, &y).unwrap();
        assert!((res.r - 0.8).abs() < 1e-12);
        assert!((res.p_value - 0.1041).abs() < 1e-4, "p = {}", res.p_value);
    }

    #[test]
    fn pearson_rejects_zero_variance_and_short_input() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_value_shrinks_as_correlation_strengthens() {
        // Same n, increasingly correlated y: p must decrease with |r|.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let weak = pearson(&x, &[2.0, 1.0, 4.0, 3.0, 6.0, 5.0]).unwrap();
        let strong = pearson(&x, &[1.0, 2.0, 4.0, 3.0, 5.0, 6.0]).unwrap();
        let perfect = pearson(&x, &x).unwrap();
        assert!(weak.r.abs() < strong.r.abs());
        assert!(weak.p_value > strong.p_value);
        assert!(strong.p_value > perfect.p_value);
    }
}
