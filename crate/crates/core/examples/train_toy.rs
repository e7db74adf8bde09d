//! Train the hybrid network on a handful of synthetic scans at a reduced
//! resolution and watch the dice-entropy loss fall.
//!
//! ```sh
//! cargo run --release --example train_toy
//! ```

use rgc_oct::metrics::{dice, MaskClass};
use rgc_oct::rng::Rng;
use rgc_oct::scan::{generate_synthetic, GradeLabel, SynthConfig};
use rgc_oct::train::{predict_mask, predict_screening, train, TrainConfig, TrainSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (h, w) = (96, 192);
    let scale = 4.0;
    let mut rng = Rng::seed_from_u64(11);

    let mut samples = Vec::new();
    for (grade, count) in [
        (GradeLabel::Healthy, 8),
        (GradeLabel::EarlyGlaucoma, 8),
        (GradeLabel::AdvancedGlaucoma, 8),
    ] {
        for _ in 0..count {
            let cup = SynthConfig::cohort_cup(grade, w, &mut rng);
            let cfg = SynthConfig::for_grade(grade, h, w, scale, 0.02, cup, &mut rng);
            let synth = generate_synthetic(&cfg)?;
            samples.push(TrainSample {
                scan: synth.scan,
                mask: synth.mask,
                grade: synth.grade,
            });
        }
    }
    let holdout = samples.split_off(18);

    let cfg = TrainConfig {
        epochs: 8,
        iters_per_epoch: 24,
        batch_size: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let spec = rgc_oct::nn::toy_hybrid_spec(h, w)?;
    let count = rgc_oct::nn::count_parameters(&spec)?;
    println!(
        "network: {} learnable + {} non-learnable parameters",
        count.learnable, count.non_learnable
    );

    let mut outcome = train(spec, &samples, &cfg)?;
    for e in &outcome.history {
        println!(
            "epoch {:>2}: seg {:.4}  cls {:.4}  total {:.4}",
            e.epoch, e.seg_loss, e.cls_loss, e.total
        );
    }

    for sample in &holdout {
        let pred = predict_mask(&mut outcome.network, &sample.scan)?;
        let rnfl = dice(&pred, &sample.mask, MaskClass::Rnfl)?.value;
        let gcip = dice(&pred, &sample.mask, MaskClass::GcIpl)?.value;
        let prob = predict_screening(&mut outcome.network, &sample.scan)?;
        println!(
            "holdout {:>9}: dice rnfl {rnfl:.3} gcip {gcip:.3}, glaucoma prob {prob:.3}",
            sample.grade.as_str()
        );
    }
    Ok(())
}
