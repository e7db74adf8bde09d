//! The evaluation toolbox: confusion rates, dice and mask precision, ROC,
//! and Pearson correlation with significance.
//!
//! ```sh
//! cargo run --release --example metrics_report
//! ```

use rgc_oct::metrics::{
    confusion_metrics, dice, mask_precision, pearson, roc, ConfusionCounts, MaskClass,
};
use rgc_oct::rng::Rng;
use rgc_oct::scan::LayerMask;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Scan-wise confusion rates.
    let counts = ConfusionCounts::new(34, 22, 2, 1);
    let m = confusion_metrics(&counts);
    println!(
        "screening counts (tp 34, tn 22, fp 2, fn 1): acc {:.4}, tpr {:.4}, tnr {:.4}, ppv {:.4}, f1 {:.4}",
        m.accuracy.unwrap(),
        m.recall.unwrap(),
        m.specificity.unwrap(),
        m.precision.unwrap(),
        m.f1.unwrap()
    );

    // Region overlap scores on a toy pair of masks.
    let gt = LayerMask::new(vec![1, 1, 1, 1, 2, 2, 2, 2, 0, 0, 0, 0], 3, 4)?;
    let pred = LayerMask::new(vec![1, 1, 1, 0, 2, 2, 0, 0, 0, 0, 0, 0], 3, 4)?;
    for class in MaskClass::ALL {
        let d = dice(&pred, &gt, class)?;
        let p = mask_precision(&pred, &gt, class)?;
        println!(
            "{:>4}: dice {:.4}, mask precision {:.4}",
            class.as_str(),
            d.value,
            p.value
        );
    }

    // ROC from noisy scores.
    let mut rng = Rng::seed_from_u64(4);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let label = i % 2 == 0;
        labels.push(label);
        let base: f64 = if label { 0.65 } else { 0.35 };
        scores.push((base + rng.normal_with(0.0, 0.15)).clamp(0.0, 1.0));
    }
    let curve = roc(&scores, &labels)?;
    println!(
        "roc over 200 noisy scores: auc {:.4} ({} points)",
        curve.auc,
        curve.points.len()
    );

    // Correlation with significance.
    let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| 2.0 * v + rng.normal_with(0.0, 6.0))
        .collect();
    let c = pearson(&x, &y)?;
    println!(
        "pearson on a noisy line: r {:.4}, p {:.3e}, n {}",
        c.r, c.p_value, c.n
    );
    Ok(())
}
