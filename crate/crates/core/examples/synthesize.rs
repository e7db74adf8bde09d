//! Generate a synthetic OCT dataset on disk: scans, masks, sidecar
//! metadata, and a manifest ready for `train` / `evaluate`.
//!
//! ```sh
//! cargo run --release --example synthesize
//! ```

use rgc_oct::rng::Rng;
use rgc_oct::scan::{
    generate_synthetic, write_mask, write_scan, write_sidecar, GradeLabel, ScanSidecar, SynthConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("rgc-oct-example-synth");
    std::fs::create_dir_all(&out)?;
    let scale = 3.0;
    let mut rng = Rng::seed_from_u64(7);

    for (grade, count) in [
        (GradeLabel::Healthy, 4),
        (GradeLabel::EarlyGlaucoma, 4),
        (GradeLabel::AdvancedGlaucoma, 4),
    ] {
        for k in 0..count {
            let cup = SynthConfig::cohort_cup(grade, 256, &mut rng);
            let cfg = SynthConfig::for_grade(grade, 128, 256, scale, 0.02, cup, &mut rng);
            let synth = generate_synthetic(&cfg)?;
            let id = format!("{}-{k}", grade.as_str());
            let scan_path = out.join(format!("{id}.png"));
            write_scan(&synth.scan, &scan_path)?;
            write_mask(&synth.mask, out.join(format!("{id}_mask.png")))?;
            write_sidecar(
                &ScanSidecar {
                    id: id.clone(),
                    axial_scale_um_per_px: scale,
                    grade: Some(synth.grade),
                },
                &scan_path,
            )?;
            let rnfl_px = cfg.rnfl_thickness_px;
            println!(
                "{id}: RNFL {:.1} um, GC-IPL {:.1} um, cup {}",
                rnfl_px * scale,
                cfg.gcip_thickness_px * scale,
                cfg.cup
                    .map(|c| format!("{} px wide", c.width_px))
                    .unwrap_or_else(|| "none".into()),
            );
        }
    }
    println!("files written under {}", out.display());
    Ok(())
}
