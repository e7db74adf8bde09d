//! Structure-tensor retina extraction, step by step, on a synthetic scan:
//! gradients, tensor components, coherent-tensor image, boundary traces
//! with outlier rejection, and the final retina mask.
//!
//! ```sh
//! cargo run --release --example preprocess_scan
//! ```

use rgc_oct::preprocess::{
    coherent_tensor_image, extract_retina, structure_tensor, trace_boundaries, PreprocessConfig,
};
use rgc_oct::scan::{generate_synthetic, write_scan, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("rgc-oct-example-preprocess");
    std::fs::create_dir_all(&out)?;

    let synth = generate_synthetic(&SynthConfig {
        width_px: 256,
        height_px: 128,
        ilm_amplitude_px: 8.0,
        noise_std: 0.03,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let cfg = PreprocessConfig::default();

    let st = structure_tensor(&synth.scan, &cfg)?;
    let tensor_img = coherent_tensor_image(&st, &synth.scan);
    write_scan(&tensor_img, out.join("tensor.png"))?;

    let (ilm_raw, cho_raw) = trace_boundaries(&tensor_img, &cfg)?;
    println!(
        "raw traces: {} / {} columns valid (ilm / choroid)",
        ilm_raw.valid_count(),
        cho_raw.valid_count()
    );

    let extraction = extract_retina(&synth.scan, &cfg)?;
    write_scan(&extraction.retina, out.join("retina.png"))?;

    // Compare the smoothed traces against the generator's ground truth.
    let mut worst_ilm = 0.0f64;
    let mut worst_cho = 0.0f64;
    for col in 0..synth.scan.width() {
        worst_ilm = worst_ilm.max((extraction.ilm[col] - synth.boundaries.ilm[col]).abs());
        worst_cho = worst_cho.max((extraction.choroid[col] - synth.boundaries.choroid[col]).abs());
    }
    println!("max ILM trace error: {worst_ilm:.2} px");
    println!("max choroid trace error: {worst_cho:.2} px");

    let kept: usize = extraction.mask.iter().map(|&v| v as usize).sum();
    println!(
        "retina mask covers {:.1}% of the scan",
        100.0 * kept as f64 / extraction.mask.len() as f64
    );
    println!("images written under {}", out.display());
    Ok(())
}
