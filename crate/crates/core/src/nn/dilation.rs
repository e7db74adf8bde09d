//! Variable-dilation schedules and their receptive-field geometry.
//!
//! A block of `n` stacked dilated convolutions with one fixed rate leaves
//! periodic holes in the set of input pixels that can influence an output
//! pixel (gridding). Ramping the rate across the block fills those holes
//! while keeping the enlarged field of view. The ramp assigns layer `i`
//! (0-based) the rate `round(r - n/2 + i)`, rounded half away from zero and
//! clamped to at least 1.

use crate::error::{Error, Result};

/// A per-layer dilation assignment for a block of stacked convolutions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DilationSchedule {
    pub depth: usize,
    pub nominal_rate: usize,
    pub rates: Vec<usize>,
}

/// Build the variable-rate ladder for a block of `n` layers with nominal
/// rate `r`. Examples: (5, 3) gives `[1,2,3,4,5]`; (3, 3) gives `[2,3,4]`;
/// (1, 1) gives `[1]`.
pub fn make_schedule(n: usize, r: usize) -> Result<DilationSchedule> {
    if n == 0 || r == 0 {
        return Err(Error::invalid("schedule needs n >= 1 and r >= 1"));
    }
    let rates = (0..n)
        .map(|i| {
            // f64::round ties away from zero, which the ramp relies on
            // (e.g. r=3, n=5, i=0: round(0.5) = 1).
            let raw = (r as f64 - n as f64 / 2.0 + i as f64).round() as i64;
            raw.max(1) as usize
        })
        .collect();
    Ok(DilationSchedule {
        depth: n,
        nominal_rate: r,
        rates,
    })
}

/// Fixed-rate schedule of the same depth, for gridding comparisons.
pub fn fixed_schedule(n: usize, r: usize) -> Result<DilationSchedule> {
    if n == 0 || r == 0 {
        return Err(Error::invalid("schedule needs n >= 1 and r >= 1"));
    }
    Ok(DilationSchedule {
        depth: n,
        nominal_rate: r,
        rates: vec![r; n],
    })
}

/// Receptive field (in pixels, per axis) of a stride-1 stack of square
/// `k x k` kernels with the scheduled dilations: `1 + sum((k-1) * r_l)`.
pub fn receptive_field(schedule: &DilationSchedule, kernel: usize) -> Result<usize> {
    if kernel == 0 {
        return Err(Error::invalid("kernel size must be at least 1"));
    }
    Ok(1 + schedule
        .rates
        .iter()
        .map(|r| (kernel - 1) * r)
        .sum::<usize>())
}

/// The set of input-pixel offsets (relative to the output pixel) that can
/// influence one output of the stacked block, computed by brute-force
/// propagation through every layer. Returned as a centered 2-D bitmap of
/// side `receptive_field`.
pub fn influence_map(schedule: &DilationSchedule, kernel: usize) -> Result<Vec<Vec<bool>>> {
    let rf = receptive_field(schedule, kernel)?;
    let center = rf / 2;
    let mut reach = vec![vec![false; rf]; rf];
    reach[center][center] = true;
    let ci = (kernel / 2) as i64;
    for &rate in &schedule.rates {
        let mut next = vec![vec![false; rf]; rf];
        for (y, row) in reach.iter().enumerate() {
            for (x, &set) in row.iter().enumerate() {
                if !set {
                    continue;
                }
                for ki in 0..kernel as i64 {
                    for kj in 0..kernel as i64 {
                        let ny = y as i64 + rate as i64 * (ci - ki);
                        let nx = x as i64 + rate as i64 * (cj_equals_ci(kernel) - kj);
                        if ny >= 0 && ny < rf as i64 && nx >= 0 && nx < rf as i64 {
                            next[ny as usize][nx as usize] = true;
                        }
                    }
                }
            }
        }
        reach = next;
    }
    Ok(reach)
}

#[inline]
fn cj_equals_ci(kernel: usize) -> i64 {
    (kernel / 2) as i64
}

/// Fraction of the receptive-field bounding box actually covered by the
/// influence set, in [0, 1]. 1.0 means no gridding holes.
pub fn gridding_coverage(schedule: &DilationSchedule, kernel: usize) -> Result<f64> {
    let map = influence_map(schedule, kernel)?;
    let rf = map.len();
    let covered: usize = map
        .iter()
        .map(|row| row.iter().filter(|v| **v).count())
        .sum();
    Ok(covered as f64 / (rf * rf) as f64)
}
