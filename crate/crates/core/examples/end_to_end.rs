//! Full pipeline on a synthetic dataset: generate cohorts, preprocess,
//! train the hybrid network, segment, profile, screen, grade, and report.
//!
//! ```sh
//! cargo run --release --example end_to_end
//! ```

use std::time::Instant;

use rgc_oct::pipeline::{pipeline_run, Manifest, ManifestRecord, RunConfig};
use rgc_oct::rng::Rng;
use rgc_oct::scan::{
    generate_synthetic, write_mask, write_scan, write_sidecar, GradeLabel, ScanSidecar, SynthConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("rgc-oct-example-e2e");
    let data = out.join("data");
    let artifacts = out.join("artifacts");
    std::fs::create_dir_all(&data)?;

    // 60 scans: 20 healthy, 20 early, 20 advanced, at 3.0 um/px so the full
    // layer stack fits a 128-row scan.
    let scale = 3.0;
    let mut rng = Rng::seed_from_u64(
        std::env::var("E2E_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(42),
    );
    let mut records = Vec::new();
    let cohorts = [
        (GradeLabel::Healthy, 20),
        (GradeLabel::EarlyGlaucoma, 20),
        (GradeLabel::AdvancedGlaucoma, 20),
    ];
    let mut idx = 0;
    for (grade, count) in cohorts {
        for _ in 0..count {
            let cup = SynthConfig::cohort_cup(grade, 256, &mut rng);
            let cfg = SynthConfig::for_grade(grade, 128, 256, scale, 0.02, cup, &mut rng);
            let synth = generate_synthetic(&cfg)?;
            let id = format!("scan{idx:03}");
            let scan_path = data.join(format!("{id}.png"));
            let mask_path = data.join(format!("{id}_mask.png"));
            write_scan(&synth.scan, &scan_path)?;
            write_mask(&synth.mask, &mask_path)?;
            write_sidecar(
                &ScanSidecar {
                    id: id.clone(),
                    axial_scale_um_per_px: scale,
                    grade: Some(synth.grade),
                },
                &scan_path,
            )?;
            records.push(ManifestRecord {
                scan_path,
                mask_path: Some(mask_path),
                grade: Some(synth.grade),
                clinician_grades: [None; 4],
            });
            idx += 1;
        }
    }
    let manifest = Manifest { records };

    let config = RunConfig {
        seed: std::env::var("E2E_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(42),
        axial_scale_um_per_px: Some(scale),
        train: rgc_oct::train::TrainConfig {
            epochs: 10,
            iters_per_epoch: 48,
            batch_size: 4,
            ..Default::default()
        },
        ..RunConfig::default()
    };

    let started = Instant::now();
    let report = pipeline_run(&manifest, &config, &artifacts, None)?;
    let elapsed = started.elapsed();

    println!("pipeline finished in {:.1} s", elapsed.as_secs_f64());
    println!("{}", report.to_json()?);
    Ok(())
}
