//! Seeded random sampling.
//!
//! Everything random in this crate flows through [`Rng`], a thin wrapper
//! around a ChaCha8 stream. Sampling helpers are written out here instead of
//! pulled from a distributions crate so that fixed seeds reproduce
//! bit-identical datasets, initializations, and training trajectories across
//! platforms and dependency upgrades.

use rand_chacha::rand_core::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derive an independent stream for a named sub-task so that adding a
    /// consumer does not shift the draws seen by the others.
    pub fn derive(&self, tag: u64) -> Self {
        let mut base = self.inner.clone();
        let seed = base.next_u64() ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Rng::seed_from_u64(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the desk-scale n used here.
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bool(&mut self) -> bool {
        self.inner.next_u64() & 1 == 1
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.uniform();
        if u1 <= f64::MIN_POSITIVE {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Normal with the given mean and standard deviation.
    pub fn normal_with(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.normal()
    }

    /// Normal clamped to `mean ± clip_sigmas · std`; keeps cohort draws from
    /// straying into an adjacent grade's range while preserving the mean.
    pub fn normal_clamped(&mut self, mean: f64, std: f64, clip_sigmas: f64) -> f64 {
        let v = self.normal_with(mean, std);
        v.clamp(mean - clip_sigmas * std, mean + clip_sigmas * std)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.index(i + 1);
            xs.swap(i, j);
        }
    }
}
