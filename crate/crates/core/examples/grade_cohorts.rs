//! SVM severity grading against the mean-RNFL threshold baseline on
//! synthetic early/advanced cohorts.
//!
//! ```sh
//! cargo run --release --example grade_cohorts
//! ```

use rgc_oct::grading::{svm_predict, svm_train, threshold_grade, Severity, ThresholdGrader};
use rgc_oct::profiles::{grade_features, thickness};
use rgc_oct::rng::Rng;
use rgc_oct::scan::{generate_synthetic, GradeLabel, SynthConfig};

fn cohort(
    grade: GradeLabel,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<rgc_oct::profiles::GradeFeatures>, Box<dyn std::error::Error>> {
    let scale = 3.0;
    let mut out = Vec::new();
    for _ in 0..count {
        let cfg = SynthConfig::for_grade(grade, 128, 200, scale, 0.0, None, rng);
        let synth = generate_synthetic(&cfg)?;
        out.push(grade_features(&thickness(&synth.mask, scale)?)?);
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = Rng::seed_from_u64(23);

    let mut features = cohort(GradeLabel::EarlyGlaucoma, 40, &mut rng)?;
    let mut labels = vec![Severity::Early; 40];
    features.extend(cohort(GradeLabel::AdvancedGlaucoma, 40, &mut rng)?);
    labels.extend(vec![Severity::Advanced; 40]);

    let test_features = {
        let mut f = cohort(GradeLabel::EarlyGlaucoma, 20, &mut rng)?;
        f.extend(cohort(GradeLabel::AdvancedGlaucoma, 20, &mut rng)?);
        f
    };
    let test_labels: Vec<Severity> = std::iter::repeat_n(Severity::Early, 20)
        .chain(std::iter::repeat_n(Severity::Advanced, 20))
        .collect();

    let model = svm_train(&features, &labels, 1e-3, 300, 1)?;
    println!(
        "svm weights over standardized [rnfl, gcip, gcc]: {:?}, bias {:.4}",
        model.weights, model.bias
    );

    let baseline = ThresholdGrader::default();
    let mut svm_correct = 0;
    let mut thr_correct = 0;
    for (f, l) in test_features.iter().zip(&test_labels) {
        if svm_predict(&model, f).0 == *l {
            svm_correct += 1;
        }
        if threshold_grade(f, &baseline) == *l {
            thr_correct += 1;
        }
    }
    println!(
        "held-out accuracy: svm {:.3} vs rnfl-threshold baseline {:.3} (threshold {:.2} um)",
        svm_correct as f64 / test_labels.len() as f64,
        thr_correct as f64 / test_labels.len() as f64,
        baseline.rnfl_threshold_um
    );
    Ok(())
}
