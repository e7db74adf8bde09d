//! Variable-dilation schedules, receptive fields, and gridding coverage.
//!
//! Prints, for each block depth and nominal rate, the fixed and variable
//! rate assignments with their receptive fields and the fraction of the
//! receptive-field box actually reachable (coverage 1.0 = no gridding).
//!
//! ```sh
//! cargo run --release --example dilation_analysis
//! ```

use rgc_oct::nn::{fixed_schedule, gridding_coverage, make_schedule, receptive_field};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:<8} {:<4} {:<18} {:<5} {:<10} {:<18} {:<5} {:<10}",
        "depth", "rate", "fixed", "rf", "coverage", "variable", "rf", "coverage"
    );
    for n in 1..=5 {
        for r in 2..=4 {
            let fixed = fixed_schedule(n, r)?;
            let variable = make_schedule(n, r)?;
            println!(
                "{:<8} {:<4} {:<18} {:<5} {:<10.4} {:<18} {:<5} {:<10.4}",
                n,
                r,
                format!("{:?}", fixed.rates),
                receptive_field(&fixed, 3)?,
                gridding_coverage(&fixed, 3)?,
                format!("{:?}", variable.rates),
                receptive_field(&variable, 3)?,
                gridding_coverage(&variable, 3)?,
            );
        }
    }
    println!();
    println!(
        "a 3x3 kernel at rate 3 sees 7x7; the [1,2,3,4,5] ladder reaches 31x31 with full coverage"
    );
    Ok(())
}
